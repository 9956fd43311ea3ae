//! Solution branches of the discretized equation near `u ≡ 1`: damped
//! Newton solves, branch-point detection along `t`, branch switching,
//! pseudo-arclength continuation, and a finite-dimensional double
//! Lyapunov–Schmidt reduction used to check fiber-constancy.
//!
//! Kernels at horizontal branch points on a circle base are two-dimensional
//! and the discrete equation is (almost) invariant under rotations of the
//! circle. Branch switching and continuation therefore pin every kernel
//! direction except the chosen one with phase conditions `⟨c, φ⟩ = 0`; each
//! condition is balanced by a Lagrange-type unfolding term `μ φ` in the
//! equation, and accepted solutions must have a plain residual below
//! [`NEWTON_TOL`].

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exact::{from_f64, to_f64, QuadraticSurd, Rational};
use crate::galerkin::{GalerkinModel, State};
use crate::variation::{DegeneracyInstant, StabilityThreshold, Window};

pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 50;
/// Kernel threshold, relative to the largest linearization entry.
pub const KERNEL_DELTA: f64 = 1e-8;
pub const BISECTION_TOL: f64 = 1e-10;
/// Agreement between detected and predicted instants.
pub const MATCH_TOL: f64 = 1e-9;
pub const FIBER_FRACTION_TOL: f64 = 1e-8;
pub const REDUCTION_TOL: f64 = 1e-8;

const MAX_LINE_SEARCH_HALVINGS: usize = 30;
const MAX_STEP_HALVINGS: usize = 4;
const CORRECTOR_MAX_ITER: usize = 15;

#[derive(Clone, Debug, PartialEq)]
pub struct BranchPoint {
    pub t: f64,
    /// Mode indices whose linearization entry vanishes at `t`.
    pub kernel_modes: Vec<usize>,
    pub predicted_instant: Option<DegeneracyInstant>,
}

impl BranchPoint {
    /// Every kernel mode is constant along the fibers.
    pub fn is_horizontal(&self, model: &GalerkinModel) -> bool {
        !self.kernel_modes.is_empty()
            && self
                .kernel_modes
                .iter()
                .all(|&i| model.modes()[i].fiber_index == 0)
    }

    /// `|t - t_predicted|`, if a prediction was matched.
    pub fn prediction_error(&self) -> Option<f64> {
        self.predicted_instant
            .as_ref()
            .map(|p| (p.t.to_f64() - self.t).abs())
    }
}

/// A solution together with the data needed to continue it.
#[derive(Clone, Debug)]
pub struct BranchStart {
    pub state: State,
    pub origin: Option<BranchPoint>,
    /// Unit vector in coefficient space used as the initial tangent guess.
    pub direction: DVector<f64>,
    /// Orthonormal directions pinned to zero along the branch.
    pub phase_conditions: Vec<DVector<f64>>,
    pub residual_norm: f64,
}

impl BranchStart {
    /// Start from an arbitrary solution with no phase conditions.
    pub fn from_state(model: &GalerkinModel, state: State) -> Result<Self> {
        let residual_norm = model.residual(&state)?.norm();
        let mut direction = state.coeffs.clone();
        direction[0] -= 1.0;
        let norm = direction.norm();
        if norm > 0.0 {
            direction /= norm;
        } else {
            let last = direction.len() - 1;
            direction[1.min(last)] = 1.0;
        }
        Ok(Self {
            state,
            origin: None,
            direction,
            phase_conditions: Vec::new(),
            residual_norm,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchSample {
    pub t: f64,
    pub state: State,
    pub energy: f64,
    /// `None` for a constant state.
    pub fiber_fraction: Option<f64>,
    pub residual_norm: f64,
    pub distance_from_one: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    StepsExhausted,
    PositivityLoss,
    NoConvergence,
    /// Heading toward `u ≡ 1`, the next step would pass through it.
    ReachedTrivial,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::StepsExhausted => "steps-exhausted",
            StopReason::PositivityLoss => "positivity-loss",
            StopReason::NoConvergence => "no-convergence",
            StopReason::ReachedTrivial => "reached-trivial",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub samples: Vec<BranchSample>,
    pub origin: Option<BranchPoint>,
    pub stop: StopReason,
    pub direction: i32,
    pub ds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionSample {
    /// Coordinates of `n` in the kernel basis.
    pub kernel_coords: DVector<f64>,
    /// Complement corrections, embedded in the full coefficient space.
    pub alpha_full: DVector<f64>,
    pub alpha_restricted: DVector<f64>,
    /// Kernel components of `residual(1 + n + α(n))`.
    pub reduced: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionResult {
    pub kernel_dim: usize,
    pub samples: Vec<ReductionSample>,
    /// `max ‖α_full(n) - α_restricted(n)‖`.
    pub discrepancy: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiberTrial {
    pub converged: bool,
    pub t: Option<f64>,
    pub distance_from_one: Option<f64>,
    pub fiber_fraction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiberConstancyReport {
    pub trials: Vec<FiberTrial>,
    pub converged: usize,
    /// Largest fiber-energy fraction among converged nontrivial solutions.
    pub max_fraction: f64,
    /// At least one trial converged and none exceeded [`FIBER_FRACTION_TOL`].
    pub passed: bool,
    pub seed: u64,
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("t must be positive, got {t}")))
    }
}

fn linear_solve(matrix: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    matrix
        .lu()
        .solve(rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
}

/// Newton's method with residual-norm backtracking. `residual` may fail
/// with a positivity violation, which triggers a step halving.
fn damped_newton<R, J>(
    mut y: DVector<f64>,
    max_iter: usize,
    residual: R,
    jacobian: J,
) -> Result<(DVector<f64>, f64)>
where
    R: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    J: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    let mut r = residual(&y)?;
    let mut norm = r.norm();
    for _ in 0..max_iter {
        if norm < NEWTON_TOL {
            return Ok((y, norm));
        }
        let step = linear_solve(jacobian(&y)?, &(-&r))
            .ok_or_else(|| Error::NoConvergence("singular Jacobian".into()))?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_LINE_SEARCH_HALVINGS {
            let trial = &y + &step * lambda;
            match residual(&trial) {
                Ok(rt) => {
                    let nt = rt.norm();
                    if nt < (1.0 - 1e-4 * lambda) * norm || nt < NEWTON_TOL {
                        y = trial;
                        r = rt;
                        norm = nt;
                        accepted = true;
                        break;
                    }
                }
                Err(Error::PositivityViolation { .. }) => {}
                Err(e) => return Err(e),
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence(format!(
                "line search stalled at residual norm {norm:e}"
            )));
        }
    }
    if norm < NEWTON_TOL {
        Ok((y, norm))
    } else {
        Err(Error::NoConvergence(format!(
            "residual norm {norm:e} after {max_iter} iterations"
        )))
    }
}

/// Solves `residual(state) = 0` at fixed `t`.
pub fn newton_solve(model: &GalerkinModel, t: f64, initial: &State) -> Result<State> {
    check_t(t)?;
    let (coeffs, _) = damped_newton(
        initial.coeffs.clone(),
        NEWTON_MAX_ITER,
        |c| model.residual(&State { t, coeffs: c.clone() }),
        |c| model.jacobian(&State { t, coeffs: c.clone() }),
    )?;
    Ok(State { t, coeffs })
}

/// Number of negative linearization entries at `u ≡ 1`, i.e. the Morse
/// index of the constant solution in the discretized space.
pub fn negative_count(model: &GalerkinModel, t: f64) -> Result<usize> {
    Ok(model
        .linearization_at_one(t)?
        .iter()
        .filter(|&&v| v < 0.0)
        .count())
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = f(lo);
    while hi - lo >= BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Scans the linearization at `u ≡ 1` on a geometric grid of `n_samples`
/// points over `(t_min, t_max]` and bisects every sign change of a
/// nonconstant mode.
pub fn detect_branch_points(
    model: &GalerkinModel,
    t_min: f64,
    t_max: f64,
    n_samples: usize,
) -> Result<Vec<BranchPoint>> {
    check_t(t_min)?;
    if !(t_max > t_min) || !t_max.is_finite() || n_samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "need 0 < t_min < t_max and n_samples >= 2, got ({t_min}, {t_max}], {n_samples}"
        )));
    }
    let a_m = model.a_m();
    let m1 = f64::from(model.total_dim() - 1);
    // Modes sharing (b, λ̂) share their linearization entry.
    let mut levels: BTreeMap<(Rational, Rational), (f64, f64)> = BTreeMap::new();
    for mode in model.modes().iter().skip(1) {
        levels
            .entry((mode.b.clone(), mode.lambda_hat.clone()))
            .or_insert((to_f64(&mode.b), to_f64(&mode.lambda_hat)));
    }
    let grid: Vec<f64> = (0..n_samples)
        .map(|k| t_min * (t_max / t_min).powf(k as f64 / (n_samples - 1) as f64))
        .collect();

    let mut roots = Vec::new();
    for &(b, lh) in levels.values() {
        let f = |t: f64| a_m * (b + lh / t - model.scalar_curvature(t) / m1);
        let mut prev = f(grid[0]);
        for w in grid.windows(2) {
            let cur = f(w[1]);
            if cur == 0.0 {
                roots.push(w[1]);
            } else if prev != 0.0 && (prev < 0.0) != (cur < 0.0) {
                roots.push(bisect(f, w[0], w[1]));
            }
            prev = cur;
        }
    }
    roots.sort_by(f64::total_cmp);
    let mut clusters: Vec<Vec<f64>> = Vec::new();
    for t in roots {
        match clusters.last_mut() {
            Some(c) if t - c[c.len() - 1] < MATCH_TOL => c.push(t),
            _ => clusters.push(vec![t]),
        }
    }

    let predictions = match (from_f64(t_min), from_f64(t_max)) {
        (Some(lo), Some(hi)) => Window::new(lo, hi)
            .and_then(|w| model.family().enumerate_degeneracy(&w))
            .unwrap_or_default(),
        _ => Vec::new(),
    };

    let mut out = Vec::with_capacity(clusters.len());
    for cluster in clusters {
        let t = cluster.iter().sum::<f64>() / cluster.len() as f64;
        let lin = model.linearization_at_one(t)?;
        let scale = lin.amax();
        let kernel_modes: Vec<usize> = (1..lin.len())
            .filter(|&i| lin[i].abs() < KERNEL_DELTA * scale)
            .collect();
        let predicted_instant = predictions
            .iter()
            .find(|p| (p.t.to_f64() - t).abs() < MATCH_TOL)
            .cloned();
        out.push(BranchPoint {
            t,
            kernel_modes,
            predicted_instant,
        });
    }
    Ok(out)
}

fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[i] = 1.0;
    v
}

/// Splits the kernel into the chosen unit direction and an orthonormal
/// basis of the remaining kernel directions.
fn kernel_frame(
    n: usize,
    kernel_modes: &[usize],
    kernel_coords: &DVector<f64>,
) -> (DVector<f64>, Vec<DVector<f64>>) {
    let norm = kernel_coords.norm();
    let mut e = DVector::zeros(n);
    for (k, &i) in kernel_modes.iter().enumerate() {
        e[i] = kernel_coords[k] / norm;
    }
    // Gram–Schmidt of the kernel unit vectors against e.
    let mut others: Vec<DVector<f64>> = Vec::new();
    for &i in kernel_modes {
        let mut v = unit(n, i);
        v -= &e * e.dot(&v);
        for o in &others {
            v -= o * o.dot(&v);
        }
        let nv = v.norm();
        if nv > 1e-8 {
            others.push(v / nv);
        }
    }
    others.truncate(kernel_modes.len().saturating_sub(1));
    (e, others)
}

/// Unknowns `(c, t, μ)`; equations `residual + Σ μ_k φ_k = 0`,
/// `⟨c, φ_k⟩ = 0` and one extra scalar constraint supplied by the caller.
struct Augmented<'a> {
    model: &'a GalerkinModel,
    phases: &'a [DVector<f64>],
}

impl Augmented<'_> {
    fn n(&self) -> usize {
        self.model.n_modes()
    }

    fn dim(&self) -> usize {
        self.n() + 1 + self.phases.len()
    }

    fn state(&self, y: &DVector<f64>) -> State {
        State {
            t: y[self.n()],
            coeffs: y.rows(0, self.n()).into_owned(),
        }
    }

    fn pack(&self, state: &State) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim());
        y.rows_mut(0, self.n()).copy_from(&state.coeffs);
        y[self.n()] = state.t;
        y
    }

    /// The `n + p` equations without the extra constraint.
    fn equations(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n();
        let st = self.state(y);
        if !(st.t > 0.0) {
            return Err(Error::PositivityViolation { min: st.t });
        }
        let mut r = self.model.residual(&st)?;
        let mut out = DVector::zeros(n + self.phases.len());
        for (k, phi) in self.phases.iter().enumerate() {
            r += phi * y[n + 1 + k];
            out[n + k] = phi.dot(&st.coeffs);
        }
        out.rows_mut(0, n).copy_from(&r);
        Ok(out)
    }

    /// `(n + p) × (n + 1 + p)` Jacobian of [`Self::equations`].
    fn jacobian(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.n();
        let p = self.phases.len();
        let st = self.state(y);
        let mut jac = DMatrix::zeros(n + p, n + 1 + p);
        jac.view_mut((0, 0), (n, n)).copy_from(&self.model.jacobian(&st)?);
        jac.view_mut((0, n), (n, 1))
            .copy_from(&self.model.residual_dt(&st)?);
        for (k, phi) in self.phases.iter().enumerate() {
            jac.view_mut((0, n + 1 + k), (n, 1)).copy_from(phi);
            jac.view_mut((n + k, 0), (1, n)).copy_from(&phi.transpose());
        }
        Ok(jac)
    }

    /// Solves the equations plus `⟨w, y - y_ref⟩ = 0` (`w` spans all
    /// unknowns).
    fn solve_with_constraint(
        &self,
        y0: DVector<f64>,
        w: &DVector<f64>,
        y_ref: &DVector<f64>,
        max_iter: usize,
    ) -> Result<(DVector<f64>, f64)> {
        let rows = self.n() + self.phases.len();
        damped_newton(
            y0,
            max_iter,
            |y| {
                let eq = self.equations(y)?;
                let mut out = DVector::zeros(rows + 1);
                out.rows_mut(0, rows).copy_from(&eq);
                out[rows] = w.dot(&(y - y_ref));
                Ok(out)
            },
            |y| {
                let jac = self.jacobian(y)?;
                let mut full = DMatrix::zeros(rows + 1, self.dim());
                full.view_mut((0, 0), (rows, self.dim())).copy_from(&jac);
                full.view_mut((rows, 0), (1, self.dim()))
                    .copy_from(&w.transpose());
                Ok(full)
            },
        )
    }

    /// Unit tangent of the solution curve at `y`, oriented to have a
    /// positive inner product with `hint`.
    fn tangent(&self, y: &DVector<f64>, hint: &DVector<f64>) -> Result<DVector<f64>> {
        let rows = self.n() + self.phases.len();
        let jac = self.jacobian(y)?;
        let mut full = DMatrix::zeros(rows + 1, self.dim());
        full.view_mut((0, 0), (rows, self.dim())).copy_from(&jac);
        full.view_mut((rows, 0), (1, self.dim()))
            .copy_from(&hint.transpose());
        let rhs = unit(rows + 1, rows);
        let tau = linear_solve(full, &rhs)
            .ok_or_else(|| Error::NoConvergence("singular tangent system".into()))?;
        Ok(&tau / tau.norm())
    }

    /// Plain residual norm of the state part of `y`.
    fn plain_residual(&self, y: &DVector<f64>) -> Result<f64> {
        Ok(self.model.residual(&self.state(y))?.norm())
    }
}

/// Bordered Newton solve for a nontrivial solution with
/// `⟨c - e₀, e⟩ = amplitude` near `t0`, starting from `e₀ + amplitude·e + extra`.
fn solve_on_branch(
    model: &GalerkinModel,
    t0: f64,
    e: &DVector<f64>,
    phases: &[DVector<f64>],
    amplitude: f64,
    extra: Option<&DVector<f64>>,
) -> Result<(State, f64)> {
    let aug = Augmented { model, phases };
    let mut start = model.one(t0);
    start.coeffs += e * amplitude;
    if let Some(x) = extra {
        start.coeffs += x;
    }
    let y0 = aug.pack(&start);
    let mut w = DVector::zeros(aug.dim());
    w.rows_mut(0, aug.n()).copy_from(e);
    let mut y_ref = aug.pack(&model.one(t0));
    y_ref.rows_mut(0, aug.n()).axpy(amplitude, e, 1.0);
    let (y, _) = aug.solve_with_constraint(y0, &w, &y_ref, NEWTON_MAX_ITER)?;
    let plain = aug.plain_residual(&y)?;
    if plain >= NEWTON_TOL {
        return Err(Error::NoConvergence(format!(
            "unfolding terms did not vanish (residual {plain:e})"
        )));
    }
    Ok((aug.state(&y), plain))
}

fn require_kernel(bp: &BranchPoint) -> Result<()> {
    if bp.kernel_modes.is_empty() {
        Err(Error::PreconditionViolated(format!(
            "branch point at t = {} has an empty kernel",
            bp.t
        )))
    } else {
        Ok(())
    }
}

/// Switches onto the bifurcating branch along the kernel direction given
/// in kernel coordinates, trying `+amplitude` and then `-amplitude`.
pub fn switch_branch_along(
    model: &GalerkinModel,
    bp: &BranchPoint,
    kernel_coords: &DVector<f64>,
    amplitude: f64,
) -> Result<BranchStart> {
    require_kernel(bp)?;
    if kernel_coords.len() != bp.kernel_modes.len() || kernel_coords.norm() == 0.0 {
        return Err(Error::InvalidArgument(
            "kernel direction must be a nonzero vector of kernel coordinates".into(),
        ));
    }
    if amplitude == 0.0 || !amplitude.is_finite() {
        return Err(Error::NoNontrivialSolution);
    }
    let (e, phases) = kernel_frame(model.n_modes(), &bp.kernel_modes, kernel_coords);
    for a in [amplitude, -amplitude] {
        if let Ok((state, residual_norm)) = solve_on_branch(model, bp.t, &e, &phases, a, None) {
            let direction = &e * a.signum();
            return Ok(BranchStart {
                state,
                origin: Some(bp.clone()),
                direction,
                phase_conditions: phases,
                residual_norm,
            });
        }
    }
    Err(Error::NoNontrivialSolution)
}

/// Switches along the first kernel mode.
pub fn switch_branch(model: &GalerkinModel, bp: &BranchPoint, amplitude: f64) -> Result<BranchStart> {
    require_kernel(bp)?;
    let mut coords = DVector::zeros(bp.kernel_modes.len());
    coords[0] = 1.0;
    switch_branch_along(model, bp, &coords, amplitude)
}

/// Kernel directions used for multi-dimensional kernels: 8 equispaced
/// directions in the plane of the first two kernel modes, or `±` for a
/// one-dimensional kernel.
pub fn sample_kernel_directions(kernel_dim: usize, count: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|s| {
            let mut v = DVector::zeros(kernel_dim);
            if kernel_dim == 1 {
                v[0] = if s % 2 == 0 { 1.0 } else { -1.0 };
            } else {
                let phi = 2.0 * PI * s as f64 / count as f64;
                v[0] = phi.cos();
                v[1] = phi.sin();
            }
            v
        })
        .collect()
}

/// Branch switching along 8 kernel directions, keeping one solution per
/// symmetry class. Solutions are identified by `t`, energy and `‖u - 1‖`,
/// all invariant under the symmetries of the factors.
pub fn switch_branch_all(model: &GalerkinModel, bp: &BranchPoint, amplitude: f64) -> Result<Vec<BranchStart>> {
    require_kernel(bp)?;
    let mut found: Vec<(BranchStart, [f64; 3])> = Vec::new();
    for dir in sample_kernel_directions(bp.kernel_modes.len(), 8) {
        let Ok(start) = switch_branch_along(model, bp, &dir, amplitude) else {
            continue;
        };
        let sig = [
            start.state.t,
            model.energy(&start.state)?,
            model.distance_from_one(&start.state),
        ];
        let duplicate = found.iter().any(|(_, other)| {
            sig.iter()
                .zip(other)
                .all(|(a, b)| (a - b).abs() <= 1e-8 * (1.0 + a.abs().max(b.abs())))
        });
        if !duplicate {
            found.push((start, sig));
        }
    }
    if found.is_empty() {
        return Err(Error::NoNontrivialSolution);
    }
    Ok(found.into_iter().map(|(s, _)| s).collect())
}

fn sample_of(model: &GalerkinModel, state: State, residual_norm: f64) -> Result<BranchSample> {
    let energy = model.energy(&state)?;
    let fiber_fraction = match model.fiber_energy_fraction(&state) {
        Ok(f) => Some(f),
        Err(Error::UndefinedFraction) => None,
        Err(e) => return Err(e),
    };
    Ok(BranchSample {
        t: state.t,
        distance_from_one: model.distance_from_one(&state),
        energy,
        fiber_fraction,
        residual_norm,
        state,
    })
}

/// Pseudo-arclength continuation of a solution branch.
///
/// `direction = 1` follows the branch away from `u ≡ 1` (growing `‖u - 1‖`),
/// `direction = -1` toward it. Each step may be halved up to four times;
/// the first sample is the start itself.
pub fn continue_branch(
    model: &GalerkinModel,
    start: &BranchStart,
    direction: i32,
    steps: usize,
    ds: f64,
) -> Result<Branch> {
    if !(ds > 0.0) || !ds.is_finite() {
        return Err(Error::InvalidArgument(format!("ds must be positive, got {ds}")));
    }
    if direction != 1 && direction != -1 {
        return Err(Error::InvalidArgument(format!(
            "direction must be 1 or -1, got {direction}"
        )));
    }
    let residual_norm = model.residual(&start.state)?.norm();
    if residual_norm >= NEWTON_TOL {
        return Err(Error::PreconditionViolated(format!(
            "start state is not a solution (residual {residual_norm:e})"
        )));
    }
    let aug = Augmented {
        model,
        phases: &start.phase_conditions,
    };
    let n = aug.n();
    let mut y = aug.pack(&start.state);
    let mut hint = DVector::zeros(aug.dim());
    hint.rows_mut(0, n).copy_from(&start.direction);
    let mut tau = aug.tangent(&y, &hint)?;
    let mut offset = start.state.coeffs.clone();
    offset[0] -= 1.0;
    let heading = tau.rows(0, n).dot(&offset);
    let wanted = f64::from(direction);
    if heading * wanted < 0.0 || (heading == 0.0 && tau.rows(0, n).dot(&start.direction) * wanted < 0.0) {
        tau = -tau;
    }

    let mut samples = vec![sample_of(model, start.state.clone(), residual_norm)?];
    let mut stop = StopReason::StepsExhausted;
    for step in 0..steps {
        let current = samples.last().unwrap().distance_from_one;
        if direction < 0 && current < ds {
            stop = StopReason::ReachedTrivial;
            break;
        }
        let mut h = ds;
        let mut accepted = None;
        let mut positivity_failure = false;
        for _ in 0..=MAX_STEP_HALVINGS {
            let predictor = &y + &tau * h;
            let pred_state = aug.state(&predictor);
            if pred_state.t <= 0.0 || model.positive_grid_values(&pred_state.coeffs).is_err() {
                positivity_failure = true;
                h *= 0.5;
                continue;
            }
            match aug.solve_with_constraint(predictor.clone(), &tau, &predictor, CORRECTOR_MAX_ITER) {
                Ok((y_new, _)) => {
                    let plain = aug.plain_residual(&y_new)?;
                    if (&y_new - &y).norm() <= 2.0 * h && plain < NEWTON_TOL {
                        accepted = Some((y_new, plain));
                        break;
                    }
                    positivity_failure = false;
                }
                Err(Error::PositivityViolation { .. }) => positivity_failure = true,
                Err(_) => positivity_failure = false,
            }
            h *= 0.5;
        }
        let Some((y_new, plain)) = accepted else {
            if step == 0 {
                return Err(Error::EmptyBranch(format!(
                    "corrector failed from t = {}",
                    start.state.t
                )));
            }
            stop = if positivity_failure {
                StopReason::PositivityLoss
            } else {
                StopReason::NoConvergence
            };
            break;
        };
        let sample = sample_of(model, aug.state(&y_new), plain)?;
        if direction < 0 && sample.distance_from_one >= current {
            stop = StopReason::ReachedTrivial;
            break;
        }
        tau = aug.tangent(&y_new, &tau)?;
        y = y_new;
        samples.push(sample);
    }
    Ok(Branch {
        samples,
        origin: start.origin.clone(),
        stop,
        direction,
        ds,
    })
}

/// Solves the complement equation for `α(n)` restricted to `indices`.
fn solve_complement(
    model: &GalerkinModel,
    t: f64,
    base: &DVector<f64>,
    indices: &[usize],
    initial: DVector<f64>,
) -> Result<DVector<f64>> {
    let embed = |v: &DVector<f64>| {
        let mut c = base.clone();
        for (k, &i) in indices.iter().enumerate() {
            c[i] += v[k];
        }
        State { t, coeffs: c }
    };
    let (v, _) = damped_newton(
        initial,
        NEWTON_MAX_ITER,
        |v| {
            let r = model.residual(&embed(v))?;
            Ok(DVector::from_iterator(indices.len(), indices.iter().map(|&i| r[i])))
        },
        |v| {
            let j = model.jacobian(&embed(v))?;
            Ok(DMatrix::from_fn(indices.len(), indices.len(), |a, b| {
                j[(indices[a], indices[b])]
            }))
        },
    )
    .map_err(|e| match e {
        Error::NoConvergence(msg) => Error::ReductionFailed(msg),
        other => other,
    })?;
    let mut full = DVector::zeros(model.n_modes());
    for (k, &i) in indices.iter().enumerate() {
        full[i] = v[k];
    }
    Ok(full)
}

/// Double Lyapunov–Schmidt reduction at a horizontal branch point.
///
/// For `n_samples` kernel vectors `n` of norm `sample_radius`, the
/// complement equation is solved twice: over the whole complement (started
/// from a seeded random fiber perturbation) and over its fiber-constant
/// part only. The two corrections must agree.
pub fn lyapunov_schmidt_reduce(
    model: &GalerkinModel,
    bp: &BranchPoint,
    sample_radius: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ReductionResult> {
    require_kernel(bp)?;
    check_t(bp.t)?;
    if let Some(&i) = bp
        .kernel_modes
        .iter()
        .find(|&&i| model.modes()[i].fiber_index != 0)
    {
        let mode = &model.modes()[i];
        return Err(Error::HypothesisViolated(format!(
            "kernel at t = {} contains the fiber mode ({}, {})",
            bp.t, mode.b, mode.lambda_hat
        )));
    }
    let n = model.n_modes();
    let kernel = &bp.kernel_modes;
    let full: Vec<usize> = (0..n).filter(|i| !kernel.contains(i)).collect();
    let fiber_constant: Vec<usize> = full
        .iter()
        .copied()
        .filter(|&i| model.modes()[i].fiber_index == 0)
        .collect();
    let fiber_slots: Vec<usize> = full
        .iter()
        .enumerate()
        .filter(|(_, &i)| model.modes()[i].fiber_index != 0)
        .map(|(k, _)| k)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_samples);
    let mut discrepancy: f64 = 0.0;
    for dir in sample_kernel_directions(kernel.len(), n_samples) {
        let coords = dir * sample_radius;
        let mut base = model.one(bp.t).coeffs;
        for (k, &i) in kernel.iter().enumerate() {
            base[i] += coords[k];
        }
        let restricted = solve_complement(
            model,
            bp.t,
            &base,
            &fiber_constant,
            DVector::zeros(fiber_constant.len()),
        )?;
        let mut initial = DVector::zeros(full.len());
        for &k in &fiber_slots {
            initial[k] = 0.1 * sample_radius * rng.gen_range(-1.0..1.0) / (fiber_slots.len() as f64).sqrt();
        }
        let alpha_full = solve_complement(model, bp.t, &base, &full, initial)?;
        discrepancy = discrepancy.max((&alpha_full - &restricted).norm());
        let r = model.residual(&State {
            t: bp.t,
            coeffs: &base + &alpha_full,
        })?;
        let reduced = DVector::from_iterator(kernel.len(), kernel.iter().map(|&i| r[i]));
        samples.push(ReductionSample {
            kernel_coords: coords,
            alpha_full,
            alpha_restricted: restricted,
            reduced,
        });
    }
    Ok(ReductionResult {
        kernel_dim: kernel.len(),
        samples,
        discrepancy,
        seed,
    })
}

/// Falsification check of fiber-constancy: branch switching from `trials`
/// seeded random starts mixing a kernel direction with fiber modes.
pub fn verify_fiber_constancy(
    model: &GalerkinModel,
    bp: &BranchPoint,
    trials: usize,
    amplitude: f64,
    seed: u64,
) -> Result<FiberConstancyReport> {
    require_kernel(bp)?;
    let eps = model
        .family()
        .stability_epsilon()
        .map_err(|e| Error::PreconditionViolated(format!("stability threshold undefined: {e}")))?;
    let t_exact = from_f64(bp.t)
        .ok_or_else(|| Error::InvalidArgument(format!("t = {} is not finite", bp.t)))?;
    if !eps.is_below(&QuadraticSurd::from_rational(t_exact)) {
        let shown = match &eps {
            StabilityThreshold::Infinite => "inf".to_string(),
            StabilityThreshold::Finite(_) => eps.to_string(),
        };
        return Err(Error::PreconditionViolated(format!(
            "t = {} is not below the stability threshold {shown}",
            bp.t
        )));
    }
    let n = model.n_modes();
    let fiber_modes: Vec<usize> = (0..n)
        .filter(|&i| model.modes()[i].fiber_index != 0)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(trials);
    let mut max_fraction: f64 = 0.0;
    let mut converged = 0;
    for _ in 0..trials {
        let coords = DVector::from_fn(bp.kernel_modes.len(), |_, _| rng.gen_range(-1.0..1.0));
        let a = amplitude * rng.gen_range(0.5..1.5);
        let mut noise = DVector::zeros(n);
        for &i in &fiber_modes {
            noise[i] = rng.gen_range(-1.0..1.0);
        }
        let nn = noise.norm();
        if nn > 0.0 {
            noise *= 0.5 * a / nn;
        }
        if coords.norm() == 0.0 {
            records.push(FiberTrial {
                converged: false,
                t: None,
                distance_from_one: None,
                fiber_fraction: None,
            });
            continue;
        }
        let (e, phases) = kernel_frame(n, &bp.kernel_modes, &coords);
        match solve_on_branch(model, bp.t, &e, &phases, a, Some(&noise)) {
            Ok((state, _)) => {
                let fraction = model.fiber_energy_fraction(&state)?;
                converged += 1;
                max_fraction = max_fraction.max(fraction);
                records.push(FiberTrial {
                    converged: true,
                    t: Some(state.t),
                    distance_from_one: Some(model.distance_from_one(&state)),
                    fiber_fraction: Some(fraction),
                });
            }
            Err(Error::NoConvergence(_)) | Err(Error::PositivityViolation { .. }) => {
                records.push(FiberTrial {
                    converged: false,
                    t: None,
                    distance_from_one: None,
                    fiber_fraction: None,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(FiberConstancyReport {
        trials: records,
        converged,
        max_fraction,
        passed: converged > 0 && max_fraction < FIBER_FRACTION_TOL,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::int;
    use crate::spectra::ManifoldDescriptor;
    use crate::variation::SubmersionFamily;
    use approx::assert_relative_eq;

    fn s1_s2(base_levels: usize, fiber_levels: usize) -> GalerkinModel {
        let family = SubmersionFamily::product(
            ManifoldDescriptor::sphere(2, int(1)).unwrap(),
            ManifoldDescriptor::circle(int(1)).unwrap(),
        )
        .unwrap();
        GalerkinModel::build(&family, base_levels, fiber_levels).unwrap()
    }

    /// Base S²(1), fiber S¹(1): at t = 1 the kernel consists of fiber modes.
    fn s2_s1(base_levels: usize, fiber_levels: usize) -> GalerkinModel {
        let family = SubmersionFamily::product(
            ManifoldDescriptor::circle(int(1)).unwrap(),
            ManifoldDescriptor::sphere(2, int(1)).unwrap(),
        )
        .unwrap();
        GalerkinModel::build(&family, base_levels, fiber_levels).unwrap()
    }

    fn point_at(model: &GalerkinModel, t: f64) -> BranchPoint {
        detect_branch_points(model, t * 0.9, t * 1.1, 16)
            .unwrap()
            .into_iter()
            .find(|bp| (bp.t - t).abs() < 1e-9)
            .expect("branch point")
    }

    #[test]
    fn newton_keeps_one_and_pulls_constants_to_one() {
        let model = s1_s2(4, 3);
        let st = newton_solve(&model, 0.7, &model.one(0.7)).unwrap();
        assert_eq!(st, model.one(0.7));
        let st = newton_solve(&model, 0.7, &model.constant(0.7, 0.9)).unwrap();
        assert_relative_eq!(st.coeffs[0], 1.0, epsilon = 1e-12);
        assert!(st.coeffs.rows(1, st.coeffs.len() - 1).amax() < 1e-12);
    }

    #[test]
    fn newton_rejects_sign_changing_start() {
        let model = s1_s2(4, 3);
        let mut st = model.one(0.7);
        st.coeffs[1] = 3.0;
        assert!(matches!(
            newton_solve(&model, 0.7, &st),
            Err(Error::PositivityViolation { .. })
        ));
    }

    #[test]
    fn detects_horizontal_points_with_kernel_pairs() {
        let model = s1_s2(6, 4);
        let bps = detect_branch_points(&model, 0.05, 2.0, 200).unwrap();
        let ts: Vec<f64> = bps.iter().map(|b| b.t).collect();
        assert_eq!(ts.len(), 4);
        for (bp, j) in bps.iter().zip([4.0, 3.0, 2.0, 1.0]) {
            assert!((bp.t - 1.0 / (j * j)).abs() < 1e-9);
            assert_eq!(bp.kernel_modes.len(), 2);
            assert!(bp.is_horizontal(&model));
            assert!(bp.prediction_error().unwrap() < MATCH_TOL);
        }
        assert!(detect_branch_points(&model, 1.5, 2.0, 20).unwrap().is_empty());
    }

    #[test]
    fn morse_count_jumps_by_kernel_size() {
        let model = s1_s2(6, 4);
        assert_eq!(negative_count(&model, 0.9).unwrap(), 3);
        assert_eq!(negative_count(&model, 1.1).unwrap(), 1);
    }

    #[test]
    fn switch_branch_preconditions() {
        let model = s1_s2(6, 3);
        let bp = point_at(&model, 1.0);
        assert!(matches!(
            switch_branch(&model, &bp, 0.0),
            Err(Error::NoNontrivialSolution)
        ));
        let empty = BranchPoint {
            kernel_modes: vec![],
            ..bp
        };
        assert!(matches!(
            switch_branch(&model, &empty, 1e-2),
            Err(Error::PreconditionViolated(_))
        ));
    }

    #[test]
    fn switch_branch_lands_on_nontrivial_solution() {
        let model = s1_s2(8, 3);
        let bp = point_at(&model, 1.0);
        let start = switch_branch(&model, &bp, 1e-2).unwrap();
        assert!(start.residual_norm < NEWTON_TOL);
        let c = &start.state.coeffs;
        let dominant = c.rows(1, c.len() - 1).iamax() + 1;
        assert_eq!(dominant, model.flat_index(1, 0));
        assert_relative_eq!(c[dominant].abs(), 1e-2, epsilon = 1e-12);
        assert!(start.state.t < 1.0);
    }

    #[test]
    fn rotated_directions_deduplicate() {
        let model = s1_s2(8, 3);
        let bp = point_at(&model, 1.0);
        let all = switch_branch_all(&model, &bp, 1e-2).unwrap();
        assert_eq!(all.len(), 1);
    }

    #[test]
    fn continuation_rejects_bad_step() {
        let model = s1_s2(6, 3);
        let start = BranchStart::from_state(&model, model.one(0.5)).unwrap();
        assert!(matches!(
            continue_branch(&model, &start, 1, 3, 0.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn continuation_toward_branch_point_shrinks_distance() {
        let model = s1_s2(8, 3);
        let bp = point_at(&model, 1.0);
        let start = switch_branch(&model, &bp, 1e-2).unwrap();
        let out = continue_branch(&model, &start, 1, 10, 0.02).unwrap();
        assert_eq!(out.stop, StopReason::StepsExhausted);
        let far = out.samples.last().unwrap();
        assert!(far.distance_from_one > 0.1);
        let back_start = BranchStart {
            state: far.state.clone(),
            residual_norm: far.residual_norm,
            ..start
        };
        let back = continue_branch(&model, &back_start, -1, 40, 0.02).unwrap();
        assert_eq!(back.stop, StopReason::ReachedTrivial);
        for w in back.samples.windows(2) {
            assert!(w[1].distance_from_one < w[0].distance_from_one);
            assert!(w[1].residual_norm < NEWTON_TOL);
        }
        assert!(back.samples.last().unwrap().distance_from_one < 0.02);
    }

    #[test]
    fn reduction_agrees_at_horizontal_point() {
        let model = s1_s2(6, 4);
        let bp = point_at(&model, 1.0);
        let red = lyapunov_schmidt_reduce(&model, &bp, 1e-2, 8, 7).unwrap();
        assert_eq!(red.kernel_dim, 2);
        assert_eq!(red.samples.len(), 8);
        assert!(red.discrepancy < REDUCTION_TOL);
        let zero = lyapunov_schmidt_reduce(&model, &bp, 0.0, 2, 7).unwrap();
        for s in &zero.samples {
            assert!(s.alpha_restricted.amax() < 1e-14);
        }
    }

    #[test]
    fn reduction_rejects_fiber_kernel() {
        let model = s2_s1(4, 4);
        let bp = point_at(&model, 1.0);
        assert!(!bp.is_horizontal(&model));
        assert!(matches!(
            lyapunov_schmidt_reduce(&model, &bp, 1e-2, 4, 0),
            Err(Error::HypothesisViolated(_))
        ));
        assert!(matches!(
            verify_fiber_constancy(&model, &bp, 2, 1e-2, 0),
            Err(Error::PreconditionViolated(_))
        ));
    }

    #[test]
    fn fiber_constancy_small_basis() {
        let model = s1_s2(6, 4);
        let bp = point_at(&model, 1.0);
        let report = verify_fiber_constancy(&model, &bp, 4, 1e-2, 11).unwrap();
        assert_eq!(report.converged, 4);
        assert!(report.passed, "max fraction {}", report.max_fraction);
    }
}
