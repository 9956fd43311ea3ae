//! Spectral Galerkin discretization of
//!
//! ```text
//! -a_m Δ_{g(t)} u + s_{g(t)} (u - u^{p_m - 1}) = 0,   a_m = 4(m-1)/(m-2),  p_m = 2m/(m-2)
//! ```
//!
//! on a two-factor product `N × F` whose factors are circles or round
//! 2-spheres. Each factor carries a 1D basis (real Fourier modes on a circle,
//! zonal Legendre modes on a sphere), orthonormal for the normalized volume
//! measure, and the product basis diagonalizes `Δ_{g(t)}` with eigenvalue
//! `-(b + λ̂/t)`. The nonlinearity is evaluated by collocation on a tensor
//! quadrature grid.
//!
//! Coefficients are taken with respect to the normalized measure of `g(1)`,
//! so `u ≡ 1` is the unit vector on the constant mode. The residual is the
//! gradient of the energy for the `L²(g(t))` inner product, i.e.
//! `∇_c E = vol(g(t)) · residual`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::exact::{int, to_f64, Rational};
use crate::spectra::{ManifoldDescriptor, SpectrumKind};
use crate::variation::SubmersionFamily;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FactorGeometry {
    Circle { radius: f64 },
    /// Round `S²`, discretized by axisymmetric modes only.
    Sphere2 { radius: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorMode {
    /// Eigenvalue of `-Δ` on the factor.
    pub eigenvalue: Rational,
    /// Wavenumber on a circle, degree on a sphere.
    pub level: usize,
    /// `true` for the sine member of a circle wavenumber.
    pub odd: bool,
}

/// One-dimensional orthonormal basis of a factor and its quadrature rule.
#[derive(Clone, Debug)]
pub struct FactorBasis {
    pub geometry: FactorGeometry,
    pub modes: Vec<FactorMode>,
    pub nodes: Vec<f64>,
    /// Normalized weights (sum to one).
    pub weights: Vec<f64>,
    /// Basis values, `nodes × modes`.
    pub values: DMatrix<f64>,
    pub volume: f64,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `P_0..P_{n-1}` and their first two derivatives at `x`, from the
/// recurrences `P'_{l+1} = P'_{l-1} + (2l+1) P_l` and the same for `P''`.
fn legendre_table(n: usize, x: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; n.max(2)];
    let mut dp = vec![0.0; n.max(2)];
    let mut ddp = vec![0.0; n.max(2)];
    p[0] = 1.0;
    p[1] = x;
    dp[1] = 1.0;
    for l in 1..n.saturating_sub(1) {
        let lf = l as f64;
        p[l + 1] = ((2.0 * lf + 1.0) * x * p[l] - lf * p[l - 1]) / (lf + 1.0);
        dp[l + 1] = dp[l - 1] + (2.0 * lf + 1.0) * p[l];
        ddp[l + 1] = ddp[l - 1] + (2.0 * lf + 1.0) * dp[l];
    }
    p.truncate(n);
    dp.truncate(n);
    ddp.truncate(n);
    (p, dp, ddp)
}

impl FactorBasis {
    /// `levels` distinct eigenvalues: wavenumbers `0..levels` on a circle
    /// (`2·levels - 1` functions), degrees `0..levels` on a sphere.
    pub fn new(geometry: FactorGeometry, radius_exact: &Rational, levels: usize) -> Self {
        match geometry {
            FactorGeometry::Circle { radius } => {
                let r2 = radius_exact * radius_exact;
                let mut modes = vec![FactorMode {
                    eigenvalue: Rational::zero(),
                    level: 0,
                    odd: false,
                }];
                for j in 1..levels {
                    let ev = int((j * j) as i64) / &r2;
                    modes.push(FactorMode {
                        eigenvalue: ev.clone(),
                        level: j,
                        odd: false,
                    });
                    modes.push(FactorMode {
                        eigenvalue: ev,
                        level: j,
                        odd: true,
                    });
                }
                // Trapezoid rule is exact for trigonometric degree < n_nodes;
                // products of three modes reach 3(levels - 1).
                let n_nodes = 4 * levels;
                let nodes: Vec<f64> = (0..n_nodes)
                    .map(|q| 2.0 * PI * q as f64 / n_nodes as f64)
                    .collect();
                let weights = vec![1.0 / n_nodes as f64; n_nodes];
                let values = DMatrix::from_fn(n_nodes, modes.len(), |q, i| {
                    let mode = &modes[i];
                    let theta = nodes[q];
                    if mode.level == 0 {
                        1.0
                    } else if mode.odd {
                        2f64.sqrt() * (mode.level as f64 * theta).sin()
                    } else {
                        2f64.sqrt() * (mode.level as f64 * theta).cos()
                    }
                });
                Self {
                    geometry,
                    modes,
                    nodes,
                    weights,
                    values,
                    volume: 2.0 * PI * radius,
                }
            }
            FactorGeometry::Sphere2 { radius } => {
                let r2 = radius_exact * radius_exact;
                let modes: Vec<FactorMode> = (0..levels)
                    .map(|l| FactorMode {
                        eigenvalue: int((l * (l + 1)) as i64) / &r2,
                        level: l,
                        odd: false,
                    })
                    .collect();
                // Gauss with 2·levels nodes is exact to degree 4·levels - 1.
                let (nodes, raw) = gauss_legendre(2 * levels);
                let weights: Vec<f64> = raw.iter().map(|w| w / 2.0).collect();
                let values = DMatrix::from_fn(nodes.len(), levels, |q, l| {
                    let (p, _, _) = legendre_table(levels, nodes[q]);
                    (2.0 * l as f64 + 1.0).sqrt() * p[l]
                });
                Self {
                    geometry,
                    modes,
                    nodes,
                    weights,
                    values,
                    volume: 4.0 * PI * radius * radius,
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Largest deviation of the quadrature mass matrix from the identity.
    pub fn mass_defect(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for k in 0..n {
                let mut acc = 0.0;
                for q in 0..self.nodes.len() {
                    acc += self.weights[q] * self.values[(q, i)] * self.values[(q, k)];
                }
                let target = if i == k { 1.0 } else { 0.0 };
                worst = worst.max((acc - target).abs());
            }
        }
        worst
    }

    /// Largest relative defect of `Δφ = -eigenvalue·φ` at the nodes,
    /// computed from independent derivative recurrences.
    pub fn laplacian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (q, &node) in self.nodes.iter().enumerate() {
            match self.geometry {
                FactorGeometry::Circle { radius } => {
                    for (i, mode) in self.modes.iter().enumerate() {
                        let j = mode.level as f64;
                        let phase = j * node;
                        let second = if mode.level == 0 {
                            0.0
                        } else if mode.odd {
                            -(j * j) * 2f64.sqrt() * phase.sin()
                        } else {
                            -(j * j) * 2f64.sqrt() * phase.cos()
                        };
                        let lap = second / (radius * radius);
                        let ev = to_f64(&mode.eigenvalue);
                        let scale = 1.0 + ev;
                        worst = worst.max((lap + ev * self.values[(q, i)]).abs() / scale);
                    }
                }
                FactorGeometry::Sphere2 { radius } => {
                    let (p, dp, ddp) = legendre_table(self.len(), node);
                    for (l, mode) in self.modes.iter().enumerate() {
                        let norm = (2.0 * l as f64 + 1.0).sqrt();
                        let lap = norm * ((1.0 - node * node) * ddp[l] - 2.0 * node * dp[l])
                            / (radius * radius);
                        let ev = to_f64(&mode.eigenvalue);
                        let scale = (1.0 + ev) * norm;
                        worst = worst.max((lap + ev * norm * p[l]).abs() / scale);
                    }
                }
            }
        }
        worst
    }
}

/// A product basis function `φ_i ⊗ ψ_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModePair {
    pub base_index: usize,
    pub fiber_index: usize,
    /// Eigenvalue of the base factor (`b`).
    pub b: Rational,
    /// Eigenvalue of the fiber factor (`λ̂`).
    pub lambda_hat: Rational,
}

/// Discretized conformal factor at parameter `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    pub coeffs: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct GalerkinModel {
    family: SubmersionFamily,
    m: u32,
    a_m: f64,
    p_m: f64,
    base: FactorBasis,
    fiber: FactorBasis,
    modes: Vec<ModePair>,
    b_values: DVector<f64>,
    lambda_values: DVector<f64>,
    /// Product basis values, `grid points × modes`.
    grid: DMatrix<f64>,
    grid_weights: DVector<f64>,
    volume_one: f64,
    fiber_dim: u32,
}

fn factor_geometry(d: &ManifoldDescriptor) -> Result<(FactorGeometry, Rational)> {
    match d.spectrum.kind() {
        SpectrumKind::Sphere { dim: 1, radius } => Ok((
            FactorGeometry::Circle {
                radius: to_f64(radius),
            },
            radius.clone(),
        )),
        SpectrumKind::Sphere { dim: 2, radius } => {
            let expected = int(2) / (radius * radius);
            if d.scalar_curvature != expected {
                return Err(Error::UnsupportedGeometry(format!(
                    "{}: scalar curvature does not match a round 2-sphere",
                    d.name
                )));
            }
            Ok((
                FactorGeometry::Sphere2 {
                    radius: to_f64(radius),
                },
                radius.clone(),
            ))
        }
        _ => Err(Error::UnsupportedGeometry(format!(
            "{}: only circles and round 2-spheres are discretized",
            d.name
        ))),
    }
}

/// Absolute tolerance of the quadrature self-checks at build time.
pub const BASIS_CHECK_TOL: f64 = 1e-12;

impl GalerkinModel {
    pub fn build(family: &SubmersionFamily, base_levels: usize, fiber_levels: usize) -> Result<Self> {
        if !family.is_product() {
            return Err(Error::UnsupportedGeometry(
                "discretization needs a Riemannian product (|A|^2 = 0, all pairs realized)".into(),
            ));
        }
        if base_levels < 2 || fiber_levels < 2 {
            return Err(Error::Configuration(format!(
                "need at least 2 levels per factor, got {base_levels} x {fiber_levels}"
            )));
        }
        let (base_geom, base_radius) = factor_geometry(&family.base)?;
        let (fiber_geom, fiber_radius) = factor_geometry(&family.fiber)?;
        let base = FactorBasis::new(base_geom, &base_radius, base_levels);
        let fiber = FactorBasis::new(fiber_geom, &fiber_radius, fiber_levels);
        for (name, basis) in [("base", &base), ("fiber", &fiber)] {
            let mass = basis.mass_defect();
            let lap = basis.laplacian_defect();
            if mass > BASIS_CHECK_TOL || lap > 1e-9 {
                return Err(Error::Configuration(format!(
                    "{name} basis check failed (mass defect {mass:e}, Laplacian defect {lap:e})"
                )));
            }
        }

        let m = family.total_dim();
        let mf = f64::from(m);
        let nb = base.len();
        let nf = fiber.len();
        let mut modes = Vec::with_capacity(nb * nf);
        for i in 0..nb {
            for j in 0..nf {
                modes.push(ModePair {
                    base_index: i,
                    fiber_index: j,
                    b: base.modes[i].eigenvalue.clone(),
                    lambda_hat: fiber.modes[j].eigenvalue.clone(),
                });
            }
        }
        let b_values = DVector::from_iterator(modes.len(), modes.iter().map(|p| to_f64(&p.b)));
        let lambda_values =
            DVector::from_iterator(modes.len(), modes.iter().map(|p| to_f64(&p.lambda_hat)));

        let nq_b = base.nodes.len();
        let nq_f = fiber.nodes.len();
        let mut grid = DMatrix::zeros(nq_b * nq_f, nb * nf);
        let mut grid_weights = DVector::zeros(nq_b * nq_f);
        for qb in 0..nq_b {
            for qf in 0..nq_f {
                let row = qb * nq_f + qf;
                grid_weights[row] = base.weights[qb] * fiber.weights[qf];
                for i in 0..nb {
                    let vb = base.values[(qb, i)];
                    for j in 0..nf {
                        grid[(row, i * nf + j)] = vb * fiber.values[(qf, j)];
                    }
                }
            }
        }
        Ok(Self {
            family: family.clone(),
            m,
            a_m: 4.0 * (mf - 1.0) / (mf - 2.0),
            p_m: 2.0 * mf / (mf - 2.0),
            volume_one: base.volume * fiber.volume,
            fiber_dim: family.fiber.dim,
            base,
            fiber,
            modes,
            b_values,
            lambda_values,
            grid,
            grid_weights,
        })
    }

    pub fn family(&self) -> &SubmersionFamily {
        &self.family
    }

    pub fn total_dim(&self) -> u32 {
        self.m
    }

    /// `a_m = 4(m-1)/(m-2)`.
    pub fn a_m(&self) -> f64 {
        self.a_m
    }

    /// `p_m = 2m/(m-2)`.
    pub fn p_m(&self) -> f64 {
        self.p_m
    }

    pub fn a_m_exact(&self) -> Rational {
        let m = i64::from(self.m);
        int(4 * (m - 1)) / int(m - 2)
    }

    pub fn p_m_exact(&self) -> Rational {
        let m = i64::from(self.m);
        int(2 * m) / int(m - 2)
    }

    pub fn base_basis(&self) -> &FactorBasis {
        &self.base
    }

    pub fn fiber_basis(&self) -> &FactorBasis {
        &self.fiber
    }

    pub fn modes(&self) -> &[ModePair] {
        &self.modes
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn flat_index(&self, base_index: usize, fiber_index: usize) -> usize {
        base_index * self.fiber.len() + fiber_index
    }

    pub fn n_grid_points(&self) -> usize {
        self.grid_weights.len()
    }

    /// `vol(g(t)) = vol(g(1)) · t^{k/2}`.
    pub fn volume(&self, t: f64) -> f64 {
        self.volume_one * t.powf(f64::from(self.fiber_dim) / 2.0)
    }

    pub fn scalar_curvature(&self, t: f64) -> f64 {
        self.family.scalar_curvature_f64(t)
    }

    /// `d s_{g(t)} / dt`.
    pub fn scalar_curvature_dt(&self, t: f64) -> f64 {
        let sf = to_f64(&self.family.fiber.scalar_curvature);
        let a = to_f64(&self.family.a_norm_sq);
        -sf / (t * t) - a
    }

    /// Eigenvalue `b + λ̂/t` of `-Δ_{g(t)}` on mode `i`.
    pub fn eigenvalue(&self, i: usize, t: f64) -> f64 {
        self.b_values[i] + self.lambda_values[i] / t
    }

    pub fn one(&self, t: f64) -> State {
        self.constant(t, 1.0)
    }

    pub fn constant(&self, t: f64, c: f64) -> State {
        let mut coeffs = DVector::zeros(self.n_modes());
        coeffs[0] = c;
        State { t, coeffs }
    }

    pub fn grid_values(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.grid * coeffs
    }

    /// Grid values, failing when `u` is not strictly positive.
    pub fn positive_grid_values(&self, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
        let u = self.grid_values(coeffs);
        let min = u.iter().copied().fold(f64::INFINITY, f64::min);
        if min > 0.0 && min.is_finite() {
            Ok(u)
        } else {
            Err(Error::PositivityViolation { min })
        }
    }

    fn power(&self, u: f64, exponent: f64) -> f64 {
        if exponent.fract() == 0.0 {
            u.powi(exponent as i32)
        } else {
            u.powf(exponent)
        }
    }

    /// Projection of `u^{p-1}` onto the basis.
    fn nonlinear_projection(&self, u: &DVector<f64>) -> DVector<f64> {
        let e = self.p_m - 1.0;
        let weighted = DVector::from_iterator(
            u.len(),
            u.iter()
                .zip(self.grid_weights.iter())
                .map(|(&v, &w)| w * self.power(v, e)),
        );
        self.grid.tr_mul(&weighted)
    }

    /// Basis coefficients of `-a_m Δ_{g(t)} u + s_{g(t)}(u - u^{p-1})`.
    pub fn residual(&self, state: &State) -> Result<DVector<f64>> {
        let u = self.positive_grid_values(&state.coeffs)?;
        let t = state.t;
        let s = self.scalar_curvature(t);
        let nl = self.nonlinear_projection(&u);
        Ok(DVector::from_fn(self.n_modes(), |i, _| {
            let c = state.coeffs[i];
            self.a_m * self.eigenvalue(i, t) * c + s * (c - nl[i])
        }))
    }

    /// `∂ residual / ∂ coeffs`.
    pub fn jacobian(&self, state: &State) -> Result<DMatrix<f64>> {
        let u = self.positive_grid_values(&state.coeffs)?;
        let t = state.t;
        let s = self.scalar_curvature(t);
        let e = self.p_m - 2.0;
        let scale = DVector::from_iterator(
            u.len(),
            u.iter()
                .zip(self.grid_weights.iter())
                .map(|(&v, &w)| (w * self.power(v, e)).sqrt()),
        );
        let mut scaled = self.grid.clone();
        for (mut row, &sc) in scaled.row_iter_mut().zip(scale.iter()) {
            row *= sc;
        }
        let mut jac = scaled.tr_mul(&scaled) * (-s * (self.p_m - 1.0));
        for i in 0..self.n_modes() {
            jac[(i, i)] += self.a_m * self.eigenvalue(i, t) + s;
        }
        Ok(jac)
    }

    /// `∂ residual / ∂ t` at fixed coefficients.
    pub fn residual_dt(&self, state: &State) -> Result<DVector<f64>> {
        let u = self.positive_grid_values(&state.coeffs)?;
        let t = state.t;
        let ds = self.scalar_curvature_dt(t);
        let nl = self.nonlinear_projection(&u);
        Ok(DVector::from_fn(self.n_modes(), |i, _| {
            let c = state.coeffs[i];
            -self.a_m * self.lambda_values[i] / (t * t) * c + ds * (c - nl[i])
        }))
    }

    /// `∫ (a_m/2)|du|² + s(u²/2 - u^p/p) dμ_{g(t)}`.
    pub fn energy(&self, state: &State) -> Result<f64> {
        let u = self.positive_grid_values(&state.coeffs)?;
        let t = state.t;
        let s = self.scalar_curvature(t);
        let mut gradient = 0.0;
        let mut mass = 0.0;
        for (i, &c) in state.coeffs.iter().enumerate() {
            gradient += self.eigenvalue(i, t) * c * c;
            mass += c * c;
        }
        let potential: f64 = u
            .iter()
            .zip(self.grid_weights.iter())
            .map(|(&v, &w)| w * self.power(v, self.p_m))
            .sum();
        Ok(self.volume(t)
            * (0.5 * self.a_m * gradient + s * (0.5 * mass - potential / self.p_m)))
    }

    /// Diagonal Jacobian of the residual at `u ≡ 1`:
    /// `a_m (b + λ̂/t - s_{g(t)}/(m-1))` per mode.
    pub fn linearization_at_one(&self, t: f64) -> Result<DVector<f64>> {
        if t <= 0.0 || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("t must be positive, got {t}")));
        }
        let threshold = self.scalar_curvature(t) / f64::from(self.m - 1);
        Ok(DVector::from_fn(self.n_modes(), |i, _| {
            self.a_m * (self.eigenvalue(i, t) - threshold)
        }))
    }

    /// Share of the nonconstant coefficient energy carried by modes that vary
    /// along the fiber; zero means the state is constant along the fibers.
    pub fn fiber_energy_fraction(&self, state: &State) -> Result<f64> {
        let mut fiber = 0.0;
        let mut total = 0.0;
        for (i, mode) in self.modes.iter().enumerate().skip(1) {
            let c2 = state.coeffs[i] * state.coeffs[i];
            total += c2;
            if mode.fiber_index != 0 {
                fiber += c2;
            }
        }
        if total == 0.0 {
            return Err(Error::UndefinedFraction);
        }
        Ok(fiber / total)
    }

    /// `‖u - 1‖` in the normalized `L²(g(1))` norm.
    pub fn distance_from_one(&self, state: &State) -> f64 {
        let mut acc = 0.0;
        for (i, &c) in state.coeffs.iter().enumerate() {
            let d = if i == 0 { c - 1.0 } else { c };
            acc += d * d;
        }
        acc.sqrt()
    }
}
