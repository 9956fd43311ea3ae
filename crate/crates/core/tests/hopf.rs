//! The quaternionic Hopf fibration S³ → S⁷ → S⁴(1/2) with an explicit joint
//! spectrum built from representation theory and checked against the
//! spectrum of S⁷.

use csc_core::exact::{int, ratio};
use csc_core::spectra::{ManifoldDescriptor, SpectrumModel};
use csc_core::variation::{
    JointMode, JointPair, JointSpectrum, StabilityThreshold, SubmersionFamily, Window,
};
use csc_core::{QuadraticSurd, Rational};

fn binomial(n: i64, k: i64) -> i64 {
    if k < 0 || n < k {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Weyl dimension of the `GL(4)` irreducible with highest weight `λ`.
fn gl4_dim(lambda: [i64; 4]) -> i64 {
    let mut num = 1;
    let mut den = 1;
    for i in 0..4 {
        for j in i + 1..4 {
            num *= lambda[i] - lambda[j] + (j - i) as i64;
            den *= (j - i) as i64;
        }
    }
    num / den
}

/// Multiplicity of the pair realized by degree-`k` harmonics of S⁷ on which
/// the fiber `Sp(1)` acts with spin `r/2`.
fn pair_multiplicity(k: i64, r: i64) -> i64 {
    let (a, b) = ((k + r) / 2, (k - r) / 2);
    let outer = gl4_dim([a, b, 0, 0]);
    let inner = if b >= 1 { gl4_dim([a - 1, b - 1, 0, 0]) } else { 0 };
    (r + 1) * (outer - inner)
}

fn dim_harmonics_s7(k: i64) -> i64 {
    binomial(k + 7, 7) - binomial(k + 5, 7)
}

fn joint_pairs(k_max: i64) -> Vec<JointPair> {
    let mut pairs = Vec::new();
    for k in 0..=k_max {
        for r in (0..=k).rev().step_by(2) {
            pairs.push(JointPair {
                b: int(k * (k + 6) - r * (r + 2)),
                lambda_hat: int(r * (r + 2)),
                multiplicity: pair_multiplicity(k, r) as u64,
            });
        }
    }
    pairs
}

fn hopf(k_max: i64) -> SubmersionFamily {
    let total = SpectrumModel::sphere(7, int(1)).unwrap();
    SubmersionFamily::new(
        ManifoldDescriptor::sphere(3, int(1)).unwrap(),
        ManifoldDescriptor::sphere(4, ratio(1, 2)).unwrap(),
        int(12),
        JointMode::ExplicitJoint(JointSpectrum {
            pairs: joint_pairs(k_max),
            complete_below: int(k_max * (k_max + 6)),
            total_spectrum: Some(total),
        }),
    )
    .unwrap()
}

#[test]
fn joint_multiplicities_sum_to_sphere_harmonics() {
    let s7 = SpectrumModel::sphere(7, int(1)).unwrap();
    for k in 0..=10 {
        let sum: i64 = joint_pairs(10)
            .iter()
            .filter(|p| p.b.clone() + p.lambda_hat.clone() == int(k * (k + 6)))
            .map(|p| p.multiplicity as i64)
            .sum();
        assert_eq!(sum, dim_harmonics_s7(k), "k = {k}");
        assert_eq!(s7.entry(k as usize).unwrap().multiplicity as i64, sum);
    }
    // Fiber-constant harmonics are the pullbacks of S⁴(1/2) harmonics.
    let s4 = SpectrumModel::sphere(4, ratio(1, 2)).unwrap();
    for l in 0..5 {
        let p = joint_pairs(10)
            .into_iter()
            .find(|p| p.lambda_hat == int(0) && p.b == int(4 * l * (l + 3)))
            .unwrap();
        assert_eq!(p.multiplicity, s4.entry(l as usize).unwrap().multiplicity);
    }
}

#[test]
fn geometry_constants() {
    let fam = hopf(10);
    assert_eq!(fam.base.scalar_curvature, int(48));
    assert_eq!(fam.fiber.scalar_curvature, int(6));
    assert_eq!(fam.total_dim(), 7);
    assert_eq!(fam.stability_epsilon().unwrap(), StabilityThreshold::Finite(ratio(1, 4)));
}

#[test]
fn classification_below_epsilon() {
    let fam = hopf(10);
    let report = fam.classify_window(&Window::new(ratio(1, 100), ratio(1, 4)).unwrap()).unwrap();
    assert_eq!(report.agree_below_epsilon, Some(true));
    let first = QuadraticSurd::new(int(-2), ratio(3, 2), &int(2));
    assert!((first.to_f64() - 0.121_320_343_559_642_6).abs() < 1e-12);
    let top = report.horizontal.last().unwrap();
    assert_eq!(top.t, first);
    assert_eq!(top.witnesses[0].b, int(16));
    for c in &report.instants {
        assert!(c.certified());
        assert!(c.fiber_constancy_guaranteed);
    }
    assert_eq!(report.instants.len(), report.horizontal.len());
}

#[test]
fn short_joint_list_is_reported_incomplete() {
    let fam = hopf(4);
    let err = fam
        .classify_window(&Window::new(ratio(1, 100), ratio(1, 4)).unwrap())
        .unwrap_err();
    assert!(matches!(err, csc_core::Error::IncompleteSpectrum { .. }), "{err}");
}

#[test]
fn mixed_instant_above_epsilon_is_not_horizontal() {
    // (b, λ̂) = (4, 3) touches at t = 1 (double root).
    let fam = hopf(10);
    let report = fam.classify_window(&Window::new(ratio(1, 2), int(2)).unwrap()).unwrap();
    let at_one: Vec<_> = report
        .instants
        .iter()
        .filter(|c| c.instant.t == QuadraticSurd::from_rational(Rational::from_integer(1.into())))
        .collect();
    assert_eq!(at_one.len(), 1);
    assert!(!at_one[0].fiber_constancy_guaranteed);
    assert!(at_one[0]
        .instant
        .witnesses
        .iter()
        .any(|w| w.b == int(4) && w.lambda_hat == int(3)));
}
