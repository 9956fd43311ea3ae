//! Residual, Jacobian and energy of the discretized equation against
//! finite-difference and closed-form oracles.

use std::f64::consts::PI;

use csc_core::exact::{int, ratio};
use csc_core::galerkin::{GalerkinModel, State};
use csc_core::spectra::ManifoldDescriptor;
use csc_core::variation::{RootResult, SubmersionFamily};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn s1_s2() -> SubmersionFamily {
    SubmersionFamily::product(
        ManifoldDescriptor::sphere(2, int(1)).unwrap(),
        ManifoldDescriptor::circle(int(1)).unwrap(),
    )
    .unwrap()
}

/// Base S²(1), fiber S¹(2): m = 3 as well, but the fiber is a circle.
fn s2_s1() -> SubmersionFamily {
    SubmersionFamily::product(
        ManifoldDescriptor::circle(int(2)).unwrap(),
        ManifoldDescriptor::sphere(2, int(1)).unwrap(),
    )
    .unwrap()
}

fn random_state(model: &GalerkinModel, rng: &mut ChaCha8Rng) -> State {
    let t = rng.gen_range(0.3..2.0);
    let n = model.n_modes();
    let mut coeffs = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0) * 0.05 / (n as f64).sqrt());
    coeffs[0] = rng.gen_range(0.8..1.2);
    State { t, coeffs }
}

fn energy_gradient_fd(model: &GalerkinModel, state: &State, h: f64) -> DVector<f64> {
    DVector::from_fn(model.n_modes(), |i, _| {
        let mut plus = state.clone();
        let mut minus = state.clone();
        plus.coeffs[i] += h;
        minus.coeffs[i] -= h;
        (model.energy(&plus).unwrap() - model.energy(&minus).unwrap()) / (2.0 * h)
    })
}

#[test]
fn residual_is_the_energy_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for family in [s1_s2(), s2_s1()] {
        let model = GalerkinModel::build(&family, 5, 4).unwrap();
        for _ in 0..10 {
            let st = random_state(&model, &mut rng);
            let grad = model.residual(&st).unwrap() * model.volume(st.t);
            let fd = energy_gradient_fd(&model, &st, 1e-5);
            let rel = (&fd - &grad).norm() / grad.norm();
            assert!(rel < 1e-6, "relative error {rel:e} at t = {}", st.t);
        }
    }
}

#[test]
fn jacobian_at_one_is_the_diagonal_linearization() {
    let model = GalerkinModel::build(&s1_s2(), 5, 4).unwrap();
    for &t in &[0.25, 0.7, 1.0, 1.6] {
        let one = model.one(t);
        let lin = model.linearization_at_one(t).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for j in 0..model.n_modes() {
            let mut plus = one.clone();
            let mut minus = one.clone();
            plus.coeffs[j] += h;
            minus.coeffs[j] -= h;
            let col = (model.residual(&plus).unwrap() - model.residual(&minus).unwrap()) / (2.0 * h);
            for i in 0..model.n_modes() {
                let expected = if i == j { lin[i] } else { 0.0 };
                worst = worst.max((col[i] - expected).abs());
            }
        }
        assert!(worst < 1e-8, "t = {t}: worst deviation {worst:e}");
        let jac = model.jacobian(&one).unwrap();
        for i in 0..model.n_modes() {
            assert!((jac[(i, i)] - lin[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn jacobian_matches_residual_differences_at_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = GalerkinModel::build(&s2_s1(), 4, 4).unwrap();
    for _ in 0..3 {
        let st = random_state(&model, &mut rng);
        let jac = model.jacobian(&st).unwrap();
        let h = 1e-6;
        for j in 0..model.n_modes() {
            let mut plus = st.clone();
            let mut minus = st.clone();
            plus.coeffs[j] += h;
            minus.coeffs[j] -= h;
            let col = (model.residual(&plus).unwrap() - model.residual(&minus).unwrap()) / (2.0 * h);
            assert!((col - jac.column(j)).amax() < 1e-7);
        }
    }
}

#[test]
fn residual_time_derivative_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = GalerkinModel::build(&s1_s2(), 4, 3).unwrap();
    let st = random_state(&model, &mut rng);
    let h = 1e-6;
    let plus = State { t: st.t + h, ..st.clone() };
    let minus = State { t: st.t - h, ..st.clone() };
    let fd = (model.residual(&plus).unwrap() - model.residual(&minus).unwrap()) / (2.0 * h);
    assert!((fd - model.residual_dt(&st).unwrap()).amax() < 1e-7);
}

#[test]
fn linearization_zeros_are_degeneracy_roots() {
    let family = s1_s2();
    let model = GalerkinModel::build(&family, 6, 4).unwrap();
    for mode in model.modes().iter().skip(1) {
        if let RootResult::Roots(roots) = family.degeneracy_roots(&mode.b, &mode.lambda_hat).unwrap() {
            for r in roots {
                let t = r.to_f64();
                let lin = model.linearization_at_one(t).unwrap();
                let i = model.flat_index(mode.base_index, mode.fiber_index);
                assert!(lin[i].abs() < 1e-12, "mode ({}, {}) at t = {t}", mode.b, mode.lambda_hat);
            }
        }
    }
    // On S¹ × S² only fiber-constant modes ever vanish.
    for &t in &[0.01, 0.1, 0.5, 1.0, 3.0, 10.0] {
        let lin = model.linearization_at_one(t).unwrap();
        for (i, mode) in model.modes().iter().enumerate() {
            if mode.fiber_index != 0 {
                assert!(lin[i] > 0.0);
            }
        }
    }
}

#[test]
fn energy_is_critical_at_one_with_closed_form_value() {
    let model = GalerkinModel::build(&s1_s2(), 6, 4).unwrap();
    let vol = 2.0 * PI * 4.0 * PI;
    assert!((model.energy(&model.one(1.0)).unwrap() - vol * 2.0 / 3.0).abs() < 1e-12 * vol);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dir = DVector::from_fn(model.n_modes(), |_, _| rng.gen_range(-1.0..1.0));
    let dir = &dir / dir.norm();
    let h = 1e-5;
    for &t in &[0.4, 1.0, 1.7] {
        let plus = State { t, coeffs: model.one(t).coeffs + &dir * h };
        let minus = State { t, coeffs: model.one(t).coeffs - &dir * h };
        let d = (model.energy(&plus).unwrap() - model.energy(&minus).unwrap()) / (2.0 * h);
        assert!(d.abs() < 1e-8, "t = {t}: derivative {d:e}");
    }
}

#[test]
fn second_variation_along_first_base_mode() {
    let model = GalerkinModel::build(&s1_s2(), 6, 4).unwrap();
    let t = 0.5;
    let i = model.flat_index(1, 0);
    let e1 = model.energy(&model.one(t)).unwrap();
    let s = model.scalar_curvature(t);
    let expected_curvature = model.a_m() * (1.0 - s / 2.0) * model.volume(t);
    for &delta in &[1e-2, 5e-3] {
        let mut st = model.one(t);
        st.coeffs[i] = delta;
        let diff = model.energy(&st).unwrap() - e1;
        let predicted = 0.5 * delta * delta * expected_curvature;
        // Odd terms vanish by symmetry, so the relative error is O(δ²).
        assert!(((diff - predicted) / predicted).abs() < 50.0 * delta * delta);
    }
}

#[test]
fn refinement_leaves_shared_residuals_unchanged() {
    let family = s1_s2();
    let coarse = GalerkinModel::build(&family, 6, 4).unwrap();
    let fine = GalerkinModel::build(&family, 12, 8).unwrap();
    // u = 1 + 0.1·√2 cos θ + 0.05·√3 P₁ + 0.02·√2 sin 2θ·√5 P₂
    let setup = |m: &GalerkinModel| {
        let mut st = m.one(0.8);
        st.coeffs[m.flat_index(1, 0)] = 0.1;
        st.coeffs[m.flat_index(0, 1)] = 0.05;
        st.coeffs[m.flat_index(4, 2)] = 0.02;
        st
    };
    let rc = coarse.residual(&setup(&coarse)).unwrap();
    let rf = fine.residual(&setup(&fine)).unwrap();
    let mut worst: f64 = 0.0;
    for mode in coarse.modes() {
        let a = rc[coarse.flat_index(mode.base_index, mode.fiber_index)];
        let b = rf[fine.flat_index(mode.base_index, mode.fiber_index)];
        worst = worst.max((a - b).abs());
    }
    assert!(worst < 1e-8, "worst change {worst:e}");
}

#[test]
fn eigentable_matches_closed_forms() {
    let model = GalerkinModel::build(&s1_s2(), 16, 8).unwrap();
    for mode in model.modes() {
        let base = &model.base_basis().modes[mode.base_index];
        let fiber = &model.fiber_basis().modes[mode.fiber_index];
        let j = base.level as i64;
        let l = fiber.level as i64;
        assert_eq!(mode.b, int(j * j));
        assert_eq!(mode.lambda_hat, int(l * (l + 1)));
    }
    let radius_two = SubmersionFamily::product(
        ManifoldDescriptor::sphere(2, ratio(1, 2)).unwrap(),
        ManifoldDescriptor::circle(int(2)).unwrap(),
    )
    .unwrap();
    let model = GalerkinModel::build(&radius_two, 4, 3).unwrap();
    let idx = model.flat_index(3, 2);
    assert_eq!(model.modes()[idx].b, ratio(1, 1));
    assert_eq!(model.modes()[idx].lambda_hat, int(24));
}

proptest! {
    #[test]
    fn constant_states_have_closed_form_residual(c in 0.2f64..2.0, t in 0.1f64..3.0) {
        let model = GalerkinModel::build(&s1_s2(), 3, 3).unwrap();
        let r = model.residual(&model.constant(t, c)).unwrap();
        let s = 2.0 / t;
        prop_assert!((r[0] - s * (c - c.powi(5))).abs() < 1e-12 * (1.0 + s * c.powi(5)));
        prop_assert!(r.rows(1, r.len() - 1).amax() < 1e-12 * (1.0 + s * c.powi(5)));
    }

    #[test]
    fn fiber_fraction_is_a_fraction(seed in 0u64..1000) {
        let model = GalerkinModel::build(&s1_s2(), 3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let st = random_state(&model, &mut rng);
        let f = model.fiber_energy_fraction(&st).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn one_solves_the_equation_for_every_t(t in 0.01f64..50.0) {
        let model = GalerkinModel::build(&s2_s1(), 3, 3).unwrap();
        prop_assert!(model.residual(&model.one(t)).unwrap().amax() < 1e-13 * (1.0 + model.scalar_curvature(t).abs()));
    }
}
