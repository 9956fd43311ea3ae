//! Cross-module and replay properties of the branch-following machinery.

use csc_core::continuation::{
    continue_branch, detect_branch_points, lyapunov_schmidt_reduce, negative_count, newton_solve,
    switch_branch, verify_fiber_constancy, BranchStart, StopReason, MATCH_TOL, NEWTON_TOL,
};
use csc_core::exact::{from_f64, int, ratio};
use csc_core::galerkin::{GalerkinModel, State};
use csc_core::spectra::ManifoldDescriptor;
use csc_core::variation::{SubmersionFamily, Window};
use csc_core::Rational;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn product(fiber: ManifoldDescriptor, base: ManifoldDescriptor) -> SubmersionFamily {
    SubmersionFamily::product(fiber, base).unwrap()
}

fn s1_s2(radius: Rational) -> SubmersionFamily {
    product(
        ManifoldDescriptor::sphere(2, int(1)).unwrap(),
        ManifoldDescriptor::circle(radius).unwrap(),
    )
}

#[test]
fn branch_points_agree_with_exact_instants() {
    let families = [
        s1_s2(int(1)),
        s1_s2(int(2)),
        product(
            ManifoldDescriptor::sphere(2, ratio(1, 2)).unwrap(),
            ManifoldDescriptor::sphere(2, int(1)).unwrap(),
        ),
        product(
            ManifoldDescriptor::circle(int(1)).unwrap(),
            ManifoldDescriptor::sphere(2, int(1)).unwrap(),
        ),
    ];
    for family in &families {
        let model = GalerkinModel::build(family, 8, 6).unwrap();
        let (lo, hi) = (0.05, 3.0);
        let bps = detect_branch_points(&model, lo, hi, 400).unwrap();
        let exact = family
            .enumerate_degeneracy(&Window::new(from_f64(lo).unwrap(), from_f64(hi).unwrap()).unwrap())
            .unwrap();
        // Every detected point matches an exact instant.
        for bp in &bps {
            let err = bp.prediction_error().expect("matched prediction");
            assert!(err < MATCH_TOL, "t = {}: error {err:e}", bp.t);
        }
        // Every exact instant realized by modes of the basis is detected.
        for inst in &exact {
            let realized = inst.witnesses.iter().any(|w| {
                model
                    .modes()
                    .iter()
                    .any(|m| m.b == w.b && m.lambda_hat == w.lambda_hat)
            });
            if realized {
                let t = inst.t.to_f64();
                assert!(bps.iter().any(|bp| (bp.t - t).abs() < MATCH_TOL), "missed {t}");
            }
        }
    }
}

#[test]
fn morse_jump_equals_kernel_size() {
    let model = GalerkinModel::build(&s1_s2(int(1)), 8, 4).unwrap();
    for bp in detect_branch_points(&model, 0.05, 2.0, 300).unwrap() {
        let below = negative_count(&model, bp.t * (1.0 - 1e-6)).unwrap();
        let above = negative_count(&model, bp.t * (1.0 + 1e-6)).unwrap();
        assert_eq!(below - above, bp.kernel_modes.len(), "t = {}", bp.t);
    }
}

fn gradient_fd(model: &GalerkinModel, state: &State, dir: &DVector<f64>) -> f64 {
    let h = 1e-5;
    let plus = State { t: state.t, coeffs: &state.coeffs + dir * h };
    let minus = State { t: state.t, coeffs: &state.coeffs - dir * h };
    (model.energy(&plus).unwrap() - model.energy(&minus).unwrap()) / (2.0 * h)
}

#[test]
fn branch_samples_are_critical_points_of_the_energy() {
    let model = GalerkinModel::build(&s1_s2(int(1)), 8, 3).unwrap();
    let bp = detect_branch_points(&model, 0.9, 1.1, 10).unwrap().remove(0);
    let start = switch_branch(&model, &bp, 1e-2).unwrap();
    let branch = continue_branch(&model, &start, 1, 8, 0.03).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for s in &branch.samples {
        assert!(s.residual_norm < NEWTON_TOL);
        let dir = DVector::from_fn(model.n_modes(), |_, _| rng.gen_range(-1.0..1.0));
        let dir = &dir / dir.norm();
        let fd = gradient_fd(&model, &s.state, &dir);
        let inner = model.volume(s.t) * model.residual(&s.state).unwrap().dot(&dir);
        assert!((fd - inner).abs() < 1e-6, "t = {}: {fd:e} vs {inner:e}", s.t);
    }
    // Consecutive samples respect the step bound.
    for w in branch.samples.windows(2) {
        let dc = (&w[1].state.coeffs - &w[0].state.coeffs).norm();
        let dt = w[1].t - w[0].t;
        assert!((dc * dc + dt * dt).sqrt() <= 2.0 * branch.ds + 1e-12);
    }
}

#[test]
fn replay_is_bit_identical() {
    let run = || {
        let model = GalerkinModel::build(&s1_s2(int(1)), 8, 3).unwrap();
        let bp = detect_branch_points(&model, 0.9, 1.1, 10).unwrap().remove(0);
        let start = switch_branch(&model, &bp, 1e-2).unwrap();
        let branch = continue_branch(&model, &start, 1, 5, 0.03).unwrap();
        let red = lyapunov_schmidt_reduce(&model, &bp, 1e-2, 4, 99).unwrap();
        let fib = verify_fiber_constancy(&model, &bp, 3, 1e-2, 99).unwrap();
        (branch.samples, red, fib)
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
}

#[test]
fn fiber_perturbations_alone_relax_to_one() {
    let model = GalerkinModel::build(&s1_s2(int(1)), 6, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for &t in &[0.7, 1.0] {
        let mut st = model.one(t);
        for (i, mode) in model.modes().iter().enumerate() {
            if mode.fiber_index != 0 {
                st.coeffs[i] = 1e-3 * rng.gen_range(-1.0..1.0);
            }
        }
        let sol = newton_solve(&model, t, &st).unwrap();
        let fiber: f64 = model
            .modes()
            .iter()
            .enumerate()
            .filter(|(_, m)| m.fiber_index != 0)
            .map(|(i, _)| sol.coeffs[i].abs())
            .fold(0.0, f64::max);
        assert!(fiber < 1e-12, "t = {t}: fiber component {fiber:e}");
        // At the degenerate instant Newton only reaches u ≡ 1 up to the
        // cube root of the tolerance along the kernel.
        let limit = if t == 1.0 { 1e-3 } else { 1e-12 };
        assert!(model.distance_from_one(&sol) < limit, "t = {t}");
    }
}

#[test]
fn branch_grows_below_the_branch_point() {
    let model = GalerkinModel::build(&s1_s2(int(1)), 10, 3).unwrap();
    let bp = detect_branch_points(&model, 0.9, 1.1, 10).unwrap().remove(0);
    let start = switch_branch(&model, &bp, 1e-2).unwrap();
    let branch = continue_branch(&model, &start, 1, 15, 0.05).unwrap();
    let samples = &branch.samples;
    assert!(samples.len() > 5);
    for w in samples.windows(2) {
        assert!(w[1].distance_from_one > w[0].distance_from_one);
        assert!(w[1].t < 1.0);
        assert!(w[1].fiber_fraction.unwrap() < 1e-20);
    }
    assert!(matches!(
        branch.stop,
        StopReason::StepsExhausted | StopReason::PositivityLoss | StopReason::NoConvergence
    ));
}

#[test]
fn starting_off_the_solution_set_is_rejected() {
    let model = GalerkinModel::build(&s1_s2(int(1)), 4, 3).unwrap();
    let mut st = model.one(0.5);
    st.coeffs[1] = 0.1;
    let start = BranchStart::from_state(&model, st).unwrap();
    assert!(continue_branch(&model, &start, 1, 3, 0.1).is_err());
}
