//! The canonical variation `g(t)` of a Riemannian submersion with totally
//! geodesic fibers, and the classification of its degeneracy and bifurcation
//! instants for the constant scalar curvature equation.
//!
//! Every eigenvalue of `-Δ_{g(t)}` has the form `b + λ̂/t` with `b` in the
//! horizontal spectrum and `λ̂` in the fiber spectrum, while the scalar
//! curvature is `s_h + s_ĝ/t - t|A|²`. A parameter `t` is a degeneracy
//! instant when some realized pair satisfies
//!
//! ```text
//! (b - s_h/(m-1)) + (λ̂ - s_ĝ/(m-1))/t + t|A|²/(m-1) = 0,
//! ```
//!
//! i.e. `t` is a positive root of `α t² + β t + γ` with
//! `α = |A|²/(m-1)`, `β = b - s_h/(m-1)`, `γ = λ̂ - s_ĝ/(m-1)`.
//! All of this is decided in exact arithmetic.

use std::cmp::Ordering;

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::exact::{format_rational, from_f64, int, QuadraticSurd, Rational};
use crate::spectra::{EigenvalueEntry, ManifoldDescriptor, SpectrumModel};

/// A pair `(b, λ̂)` realized by an eigenfunction of the total space.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct JointPair {
    pub b: Rational,
    pub lambda_hat: Rational,
    pub multiplicity: u64,
}

/// User-supplied list of realized pairs, complete for `b + λ̂ <= complete_below`.
#[derive(Clone, Debug)]
pub struct JointSpectrum {
    pub pairs: Vec<JointPair>,
    pub complete_below: Rational,
    /// Spectrum of `-Δ_{g(1)}`; when given, every `b + λ̂` must belong to it.
    pub total_spectrum: Option<SpectrumModel>,
}

#[derive(Clone, Debug)]
pub enum JointMode {
    /// Every pair of a horizontal and a fiber eigenvalue is realized (products).
    AllPairs,
    ExplicitJoint(JointSpectrum),
}

/// The family `{g(t)}_{t>0}`: fiber `(F^k, tĝ)` over base `(N^n, h)`.
#[derive(Clone, Debug)]
pub struct SubmersionFamily {
    pub fiber: ManifoldDescriptor,
    pub base: ManifoldDescriptor,
    pub a_norm_sq: Rational,
    pub joint_mode: JointMode,
    pub horizontal_spectrum: SpectrumModel,
}

/// Half-open parameter window `(t_min, t_max]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    pub t_min: Rational,
    pub t_max: Rational,
}

impl Window {
    pub fn new(t_min: Rational, t_max: Rational) -> Result<Self> {
        if !t_min.is_positive() || t_min >= t_max {
            return Err(Error::InvalidArgument(format!(
                "window must satisfy 0 < t_min < t_max, got ({}, {}]",
                format_rational(&t_min),
                format_rational(&t_max)
            )));
        }
        Ok(Self { t_min, t_max })
    }

    pub fn contains(&self, t: &QuadraticSurd) -> bool {
        t.cmp_rational(&self.t_min) == Ordering::Greater
            && t.cmp_rational(&self.t_max) != Ordering::Greater
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RootResult {
    NoRoot,
    /// At most two positive roots, ascending.
    Roots(Vec<QuadraticSurd>),
    /// Every `t > 0` is a root.
    AllPositive,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Witness {
    pub b: Rational,
    pub lambda_hat: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegeneracyInstant {
    pub t: QuadraticSurd,
    pub witnesses: Vec<Witness>,
    /// Some witness is `(b, 0)` with `b` a nonzero base eigenvalue.
    pub horizontal: bool,
}

/// Upper bounds on `b` and `λ̂` that any pair degenerating inside a window
/// must respect. Derived from `b, λ̂ >= 0` and `α >= 0`:
///
/// * `b = σ_h - γ/t - αt <= σ_h + max(0, σ_f - λ̂)/t <= σ_h + max(0, σ_f)/t_min`
/// * `λ̂ = σ_f - t(b - σ_h) - αt² <= σ_f + t·max(0, σ_h - b) <= σ_f + t_max·max(0, σ_h)`
///
/// where `σ_h = s_h/(m-1)` and `σ_f = s_ĝ/(m-1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruncationBounds {
    pub b_max: Rational,
    pub lambda_hat_max: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BifurcationCertificate {
    pub t_star: QuadraticSurd,
    pub base_eigenvalue: Rational,
    pub index_below: u64,
    pub index_above: u64,
    /// Sample points `r < t_star < s` realizing the sign change.
    pub witness_below: Rational,
    pub witness_above: Rational,
    pub scalar_below: Rational,
    pub scalar_above: Rational,
}

/// Outcome of the four-condition nondiscreteness test.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NondiscretenessVerdict {
    pub nondiscrete: bool,
    /// `|A| = 0`, `σ_h ∈ Spec(-Δ_hor)`, `σ_f ∈ Spec(-Δ_ĝ)`, pair realized and nonzero.
    pub conditions: [bool; 4],
    pub witness: Option<Witness>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StabilityThreshold {
    Finite(Rational),
    Infinite,
}

impl StabilityThreshold {
    /// `t < ε`.
    pub fn is_below(&self, t: &QuadraticSurd) -> bool {
        match self {
            StabilityThreshold::Infinite => true,
            StabilityThreshold::Finite(eps) => t.cmp_rational(eps) == Ordering::Less,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            StabilityThreshold::Infinite => f64::INFINITY,
            StabilityThreshold::Finite(eps) => crate::exact::to_f64(eps),
        }
    }
}

impl std::fmt::Display for StabilityThreshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StabilityThreshold::Infinite => write!(f, "inf"),
            StabilityThreshold::Finite(eps) => write!(f, "{}", format_rational(eps)),
        }
    }
}

/// Conditions under which the small-`t` equality also holds in a
/// neighbourhood of infinity.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RegimeFlags {
    /// `λ̂₁ > s_ĝ/(m-1) > 0`.
    pub hypothesis: bool,
    pub base_scalar_nonpositive: bool,
    pub twisted: bool,
    /// Global product whose base satisfies the same inequality, so the
    /// factors may be interchanged.
    pub interchanged_product: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Certification {
    Certified(BifurcationCertificate),
    /// Not in `D_hor`; no computable criterion applies.
    NotHorizontal,
    Inconclusive(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassifiedInstant {
    pub instant: DegeneracyInstant,
    pub certification: Certification,
    pub fiber_constancy_guaranteed: bool,
}

impl ClassifiedInstant {
    pub fn certified(&self) -> bool {
        matches!(self.certification, Certification::Certified(_))
    }
}

#[derive(Clone, Debug)]
pub struct ClassificationReport {
    pub window: Window,
    /// Present when `D = (0, ∞)`; the instant lists are then empty.
    pub nondiscrete: Option<NondiscretenessVerdict>,
    pub instants: Vec<ClassifiedInstant>,
    pub horizontal: Vec<DegeneracyInstant>,
    pub epsilon: Option<StabilityThreshold>,
    pub epsilon_note: Option<String>,
    pub regime: RegimeFlags,
    /// Whether `D`, `D_hor` and certified-`B` coincide on `(t_min, ε)`;
    /// `None` when `ε` is undefined.
    pub agree_below_epsilon: Option<bool>,
    pub bounds: TruncationBounds,
}

impl ClassificationReport {
    pub fn degeneracy(&self) -> impl Iterator<Item = &DegeneracyInstant> {
        self.instants.iter().map(|c| &c.instant)
    }

    pub fn certified(&self) -> impl Iterator<Item = &ClassifiedInstant> {
        self.instants.iter().filter(|c| c.certified())
    }

    /// `D \ certified-B` within the window.
    pub fn uncertified(&self) -> impl Iterator<Item = &ClassifiedInstant> {
        self.instants.iter().filter(|c| !c.certified())
    }
}

fn rational_from_f64(x: f64) -> Rational {
    from_f64(x).expect("finite float")
}

impl SubmersionFamily {
    pub fn new(
        fiber: ManifoldDescriptor,
        base: ManifoldDescriptor,
        a_norm_sq: Rational,
        joint_mode: JointMode,
    ) -> Result<Self> {
        let m = fiber.dim + base.dim;
        if m < 3 {
            return Err(Error::InvalidArgument(format!(
                "total dimension must be >= 3, got {m}"
            )));
        }
        if a_norm_sq.is_negative() {
            return Err(Error::InvalidArgument("|A|^2 must be nonnegative".into()));
        }
        if let JointMode::ExplicitJoint(joint) = &joint_mode {
            for p in &joint.pairs {
                if p.b.is_negative() || p.lambda_hat.is_negative() || p.multiplicity == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "invalid joint pair ({}, {}, {})",
                        format_rational(&p.b),
                        format_rational(&p.lambda_hat),
                        p.multiplicity
                    )));
                }
                if let Some(total) = &joint.total_spectrum {
                    let sum = &p.b + &p.lambda_hat;
                    if !total.contains(&sum)? {
                        return Err(Error::InvalidArgument(format!(
                            "joint pair ({}, {}) sums to {} which is not in the total spectrum",
                            format_rational(&p.b),
                            format_rational(&p.lambda_hat),
                            format_rational(&sum)
                        )));
                    }
                }
            }
        }
        let horizontal_spectrum = base.spectrum.clone();
        Ok(Self {
            fiber,
            base,
            a_norm_sq,
            joint_mode,
            horizontal_spectrum,
        })
    }

    /// Riemannian product `base × fiber` (`|A| = 0`, all pairs realized).
    pub fn product(fiber: ManifoldDescriptor, base: ManifoldDescriptor) -> Result<Self> {
        Self::new(fiber, base, Rational::zero(), JointMode::AllPairs)
    }

    /// Replaces the horizontal spectrum (defaults to the base spectrum).
    pub fn with_horizontal_spectrum(mut self, spectrum: SpectrumModel) -> Self {
        self.horizontal_spectrum = spectrum;
        self
    }

    pub fn total_dim(&self) -> u32 {
        self.fiber.dim + self.base.dim
    }

    fn m_minus_one(&self) -> Rational {
        int(i64::from(self.total_dim()) - 1)
    }

    /// `s_h/(m-1)`.
    pub fn sigma_base(&self) -> Rational {
        &self.base.scalar_curvature / self.m_minus_one()
    }

    /// `s_ĝ/(m-1)`.
    pub fn sigma_fiber(&self) -> Rational {
        &self.fiber.scalar_curvature / self.m_minus_one()
    }

    /// `|A|²/(m-1)`.
    pub fn alpha(&self) -> Rational {
        &self.a_norm_sq / self.m_minus_one()
    }

    pub fn is_product(&self) -> bool {
        self.a_norm_sq.is_zero() && matches!(self.joint_mode, JointMode::AllPairs)
    }

    /// `s_{g(t)} = s_h + s_ĝ/t - t|A|²`.
    pub fn scalar_curvature(&self, t: &Rational) -> Result<Rational> {
        if !t.is_positive() {
            return Err(Error::InvalidArgument(format!(
                "t must be positive, got {}",
                format_rational(t)
            )));
        }
        Ok(&self.base.scalar_curvature + &self.fiber.scalar_curvature / t - t * &self.a_norm_sq)
    }

    pub fn scalar_curvature_surd(&self, t: &QuadraticSurd) -> Result<QuadraticSurd> {
        if !t.is_positive() {
            return Err(Error::InvalidArgument(format!("t must be positive, got {t}")));
        }
        let inv = t.recip().expect("positive value has a reciprocal");
        let value = inv
            .scale(&self.fiber.scalar_curvature)
            .checked_sub(&t.scale(&self.a_norm_sq))
            .expect("same radicand")
            .add_rational(&self.base.scalar_curvature);
        Ok(value)
    }

    pub fn scalar_curvature_f64(&self, t: f64) -> f64 {
        let sh = crate::exact::to_f64(&self.base.scalar_curvature);
        let sf = crate::exact::to_f64(&self.fiber.scalar_curvature);
        let a = crate::exact::to_f64(&self.a_norm_sq);
        sh + sf / t - t * a
    }

    /// Left-hand side of the degeneracy equation for the pair at `t`.
    pub fn degeneracy_defect(&self, b: &Rational, lambda_hat: &Rational, t: &QuadraticSurd) -> QuadraticSurd {
        let inv = t.recip().expect("t > 0");
        inv.scale(&(lambda_hat - self.sigma_fiber()))
            .checked_add(&t.scale(&self.alpha()))
            .expect("same radicand")
            .add_rational(&(b - self.sigma_base()))
    }

    /// Positive `t` at which `(b, λ̂)` degenerates.
    pub fn degeneracy_roots(&self, b: &Rational, lambda_hat: &Rational) -> Result<RootResult> {
        if b.is_negative() || lambda_hat.is_negative() {
            return Err(Error::InvalidArgument(
                "eigenvalues must be nonnegative".into(),
            ));
        }
        let alpha = self.alpha();
        let beta = b - self.sigma_base();
        let gamma = lambda_hat - self.sigma_fiber();
        Ok(positive_roots(&alpha, &beta, &gamma))
    }

    pub fn truncation_bounds(&self, window: &Window) -> TruncationBounds {
        let zero = Rational::zero();
        let sh = self.sigma_base();
        let sf = self.sigma_fiber();
        let b_max = &sh + sf.clone().max(zero.clone()) / &window.t_min;
        let lambda_hat_max = &sf + &window.t_max * sh.max(zero.clone());
        TruncationBounds {
            b_max: b_max.max(zero.clone()),
            lambda_hat_max: lambda_hat_max.max(zero),
        }
    }

    fn nonzero_base_entries(&self, b_max: &Rational) -> Result<Vec<EigenvalueEntry>> {
        Ok(self
            .base
            .spectrum
            .entries_up_to(b_max)?
            .into_iter()
            .filter(|e| !e.value.is_zero())
            .collect())
    }

    /// Realized pairs inside the truncation bounds, excluding `(0, 0)`.
    pub fn admissible_pairs(&self, bounds: &TruncationBounds) -> Result<Vec<Witness>> {
        let mut pairs: Vec<Witness> = self
            .nonzero_base_entries(&bounds.b_max)?
            .into_iter()
            .map(|e| Witness {
                b: e.value,
                lambda_hat: Rational::zero(),
            })
            .collect();
        match &self.joint_mode {
            JointMode::AllPairs => {
                let hor = self.horizontal_spectrum.entries_up_to(&bounds.b_max)?;
                let fib = self.fiber.spectrum.entries_up_to(&bounds.lambda_hat_max)?;
                for x in &hor {
                    for y in &fib {
                        if x.value.is_zero() && y.value.is_zero() {
                            continue;
                        }
                        pairs.push(Witness {
                            b: x.value.clone(),
                            lambda_hat: y.value.clone(),
                        });
                    }
                }
            }
            JointMode::ExplicitJoint(joint) => {
                let needed = &bounds.b_max + &bounds.lambda_hat_max;
                if needed > joint.complete_below {
                    return Err(Error::IncompleteSpectrum {
                        requested: format_rational(&needed),
                        complete_below: format_rational(&joint.complete_below),
                    });
                }
                for p in &joint.pairs {
                    if p.b <= bounds.b_max
                        && p.lambda_hat <= bounds.lambda_hat_max
                        && !(p.b.is_zero() && p.lambda_hat.is_zero())
                    {
                        pairs.push(Witness {
                            b: p.b.clone(),
                            lambda_hat: p.lambda_hat.clone(),
                        });
                    }
                }
            }
        }
        pairs.sort();
        pairs.dedup();
        Ok(pairs)
    }

    fn collect_instants(&self, window: &Window, pairs: &[Witness]) -> Result<Vec<DegeneracyInstant>> {
        let mut hits: Vec<(QuadraticSurd, Witness)> = Vec::new();
        for w in pairs {
            match self.degeneracy_roots(&w.b, &w.lambda_hat)? {
                RootResult::NoRoot => {}
                RootResult::AllPositive => {
                    return Err(Error::NondiscreteDegeneracy {
                        b: format_rational(&w.b),
                        lambda_hat: format_rational(&w.lambda_hat),
                    })
                }
                RootResult::Roots(roots) => {
                    hits.extend(roots.into_iter().filter(|t| window.contains(t)).map(|t| (t, w.clone())));
                }
            }
        }
        hits.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        let mut out: Vec<DegeneracyInstant> = Vec::new();
        for (t, w) in hits {
            match out.last_mut() {
                Some(last) if last.t == t => last.witnesses.push(w),
                _ => out.push(DegeneracyInstant {
                    t,
                    witnesses: vec![w],
                    horizontal: false,
                }),
            }
        }
        for inst in &mut out {
            inst.horizontal = inst.witnesses.iter().try_fold(false, |acc, w| {
                Ok::<_, Error>(
                    acc || (w.lambda_hat.is_zero()
                        && !w.b.is_zero()
                        && self.base.spectrum.contains(&w.b)?),
                )
            })?;
        }
        Ok(out)
    }

    /// `D ∩ (t_min, t_max]`, ascending.
    pub fn enumerate_degeneracy(&self, window: &Window) -> Result<Vec<DegeneracyInstant>> {
        let bounds = self.truncation_bounds(window);
        let pairs = self.admissible_pairs(&bounds)?;
        self.collect_instants(window, &pairs)
    }

    /// `D_hor ∩ (t_min, t_max]`, ascending.
    pub fn enumerate_horizontal_degeneracy(&self, window: &Window) -> Result<Vec<DegeneracyInstant>> {
        let bounds = self.truncation_bounds(window);
        let pairs: Vec<Witness> = self
            .nonzero_base_entries(&bounds.b_max)?
            .into_iter()
            .map(|e| Witness {
                b: e.value,
                lambda_hat: Rational::zero(),
            })
            .collect();
        self.collect_instants(window, &pairs)
    }

    /// The `count` largest elements of `D_hor`, strictly decreasing.
    pub fn b_sequence(&self, count: usize) -> Result<Vec<QuadraticSurd>> {
        if !self.fiber.scalar_curvature.is_positive() {
            return Err(Error::PreconditionViolated(
                "the fiber scalar curvature must be positive".into(),
            ));
        }
        let mut out = Vec::with_capacity(count);
        for entry in self.base.spectrum.iter() {
            if out.len() == count {
                break;
            }
            let entry = entry?;
            if entry.value.is_zero() {
                continue;
            }
            // s_ĝ > 0 makes s_{g(t)} strictly decreasing: at most one root per b.
            if let RootResult::Roots(roots) = self.degeneracy_roots(&entry.value, &Rational::zero())? {
                out.extend(roots.into_iter().take(1));
            }
        }
        Ok(out)
    }

    /// Morse index of `u ≡ 1` for the reduced functional on the base.
    pub fn morse_index(&self, t: &Rational) -> Result<u64> {
        let threshold = self.scalar_curvature(t)? / self.m_minus_one();
        if !threshold.is_zero() && self.base.spectrum.contains(&threshold)? {
            return Err(Error::DegeneratePoint(format_rational(t)));
        }
        self.base.spectrum.count_strictly_below(&threshold)
    }

    /// Certifies `t_star ∈ B` via a Morse-index jump across it.
    pub fn certify_bifurcation(&self, t_star: &QuadraticSurd) -> Result<BifurcationCertificate> {
        if !t_star.is_positive() {
            return Err(Error::InvalidArgument(format!("t must be positive, got {t_star}")));
        }
        let s_star = self.scalar_curvature_surd(t_star)?;
        let threshold = s_star.scale(&(Rational::one() / self.m_minus_one()));
        let base_eigenvalue = match threshold.as_rational() {
            Some(v) if !v.is_zero() && self.base.spectrum.contains(v)? => v.clone(),
            _ => {
                return Err(Error::NotApplicable(format!(
                    "t = {t_star} is not a horizontal degeneracy instant"
                )))
            }
        };
        if s_star.is_zero() {
            return Err(Error::ZeroScalarCurvature(t_star.to_string()));
        }
        let s_star = s_star.as_rational().expect("rational threshold").clone();
        // Neighbouring base eigenvalues bound the admissible thresholds.
        let below = self.base.spectrum.entries_up_to(&base_eigenvalue)?;
        let idx = below.len() - 1;
        let lower = if idx == 0 {
            None
        } else {
            Some(below[idx - 1].value.clone())
        };
        let upper = self.base.spectrum.entry(idx + 1).ok().map(|e| e.value);

        let m1 = self.m_minus_one();
        let in_gap = |theta: &Rational| {
            theta != &base_eigenvalue
                && lower.as_ref().is_none_or(|l| theta > l)
                && upper.as_ref().is_none_or(|u| theta < u)
        };
        let center = rational_from_f64(t_star.to_f64());
        for k in 1..=80 {
            let h = &center * Rational::new(1.into(), num_bigint::BigInt::from(2).pow(k));
            let r = &center - &h;
            let s = &center + &h;
            if !r.is_positive()
                || t_star.cmp_rational(&r) != Ordering::Greater
                || t_star.cmp_rational(&s) != Ordering::Less
            {
                continue;
            }
            let sr = self.scalar_curvature(&r)?;
            let ss = self.scalar_curvature(&s)?;
            if !in_gap(&(&sr / &m1)) || !in_gap(&(&ss / &m1)) {
                continue;
            }
            if ((&sr - &s_star) * (&ss - &s_star)).is_negative() {
                let index_below = self.morse_index(&r)?;
                let index_above = self.morse_index(&s)?;
                if index_below != index_above {
                    return Ok(BifurcationCertificate {
                        t_star: t_star.clone(),
                        base_eigenvalue,
                        index_below,
                        index_above,
                        witness_below: r,
                        witness_above: s,
                        scalar_below: sr,
                        scalar_above: ss,
                    });
                }
            }
        }
        Err(Error::Inconclusive(format!(
            "no sign change of s_g(t) - s_g(t*) around t* = {t_star}"
        )))
    }

    /// Tests the four conditions under which `D = (0, ∞)`.
    pub fn check_nondiscreteness(&self) -> Result<NondiscretenessVerdict> {
        let sh = self.sigma_base();
        let sf = self.sigma_fiber();
        let c1 = self.a_norm_sq.is_zero();
        let c2 = !sh.is_negative() && self.horizontal_spectrum.contains(&sh)?;
        let c3 = !sf.is_negative() && self.fiber.spectrum.contains(&sf)?;
        let c4 = c2
            && c3
            && !(sh.is_zero() && sf.is_zero())
            && match &self.joint_mode {
                JointMode::AllPairs => true,
                JointMode::ExplicitJoint(joint) => {
                    (sf.is_zero() && self.base.spectrum.contains(&sh)?)
                        || joint.pairs.iter().any(|p| p.b == sh && p.lambda_hat == sf)
                }
            };
        let nondiscrete = c1 && c2 && c3 && c4;
        Ok(NondiscretenessVerdict {
            nondiscrete,
            conditions: [c1, c2, c3, c4],
            witness: nondiscrete.then_some(Witness {
                b: sh,
                lambda_hat: sf,
            }),
        })
    }

    /// Supremum of the `t` below which every degeneracy is horizontal.
    pub fn stability_epsilon(&self) -> Result<StabilityThreshold> {
        let first = self.fiber.spectrum.first_nonzero()?;
        let sf = self.sigma_fiber();
        if first <= sf {
            return Err(Error::NotApplicable(format!(
                "first nonzero fiber eigenvalue {} does not exceed s_fiber/(m-1) = {}",
                format_rational(&first),
                format_rational(&sf)
            )));
        }
        let sh = &self.base.scalar_curvature;
        if sh.is_positive() {
            Ok(StabilityThreshold::Finite(
                (self.m_minus_one() * first - &self.fiber.scalar_curvature) / sh,
            ))
        } else {
            Ok(StabilityThreshold::Infinite)
        }
    }

    pub fn regime_flags(&self) -> Result<RegimeFlags> {
        let sf = self.sigma_fiber();
        let fiber_first = self.fiber.spectrum.first_nonzero()?;
        let sh = self.sigma_base();
        let interchanged_product = self.is_product() && sh.is_positive() && {
            let base_first = self.base.spectrum.first_nonzero()?;
            base_first > sh
        };
        Ok(RegimeFlags {
            hypothesis: sf.is_positive() && fiber_first > sf,
            base_scalar_nonpositive: !self.base.scalar_curvature.is_positive(),
            twisted: self.a_norm_sq.is_positive(),
            interchanged_product,
        })
    }

    /// Full classification of `D`, `D_hor` and certified bifurcation
    /// instants inside a window.
    pub fn classify_window(&self, window: &Window) -> Result<ClassificationReport> {
        let bounds = self.truncation_bounds(window);
        let regime = self.regime_flags()?;
        let (epsilon, epsilon_note) = match self.stability_epsilon() {
            Ok(eps) => (Some(eps), None),
            Err(Error::NotApplicable(msg)) => (None, Some(msg)),
            Err(e) => return Err(e),
        };
        let verdict = self.check_nondiscreteness()?;
        if verdict.nondiscrete {
            return Ok(ClassificationReport {
                window: window.clone(),
                nondiscrete: Some(verdict),
                instants: Vec::new(),
                horizontal: Vec::new(),
                epsilon,
                epsilon_note,
                regime,
                agree_below_epsilon: None,
                bounds,
            });
        }
        let degeneracy = self.enumerate_degeneracy(window)?;
        let horizontal = self.enumerate_horizontal_degeneracy(window)?;
        let mut instants = Vec::with_capacity(degeneracy.len());
        for instant in degeneracy {
            let certification = if instant.horizontal {
                match self.certify_bifurcation(&instant.t) {
                    Ok(cert) => Certification::Certified(cert),
                    Err(Error::Inconclusive(msg)) | Err(Error::ZeroScalarCurvature(msg)) => {
                        Certification::Inconclusive(msg)
                    }
                    Err(e) => return Err(e),
                }
            } else {
                Certification::NotHorizontal
            };
            let fiber_constancy_guaranteed =
                epsilon.as_ref().is_some_and(|eps| eps.is_below(&instant.t));
            instants.push(ClassifiedInstant {
                instant,
                certification,
                fiber_constancy_guaranteed,
            });
        }
        let agree_below_epsilon = epsilon.as_ref().map(|eps| {
            let d: Vec<&QuadraticSurd> = instants
                .iter()
                .map(|c| &c.instant.t)
                .filter(|t| eps.is_below(t))
                .collect();
            let hor: Vec<&QuadraticSurd> =
                horizontal.iter().map(|i| &i.t).filter(|t| eps.is_below(t)).collect();
            let cert: Vec<&QuadraticSurd> = instants
                .iter()
                .filter(|c| c.certified())
                .map(|c| &c.instant.t)
                .filter(|t| eps.is_below(t))
                .collect();
            d == hor && hor == cert
        });
        Ok(ClassificationReport {
            window: window.clone(),
            nondiscrete: None,
            instants,
            horizontal,
            epsilon,
            epsilon_note,
            regime,
            agree_below_epsilon,
            bounds,
        })
    }
}

/// Positive roots of `α t² + β t + γ` with `α >= 0`.
fn positive_roots(alpha: &Rational, beta: &Rational, gamma: &Rational) -> RootResult {
    if alpha.is_zero() {
        if beta.is_zero() {
            return if gamma.is_zero() {
                RootResult::AllPositive
            } else {
                RootResult::NoRoot
            };
        }
        let t = -(gamma / beta);
        return if t.is_positive() {
            RootResult::Roots(vec![QuadraticSurd::from_rational(t)])
        } else {
            RootResult::NoRoot
        };
    }
    let disc = beta * beta - int(4) * alpha * gamma;
    if disc.is_negative() {
        return RootResult::NoRoot;
    }
    let two_a = int(2) * alpha;
    let center = -(beta / &two_a);
    let half_width = Rational::one() / &two_a;
    let mut roots: Vec<QuadraticSurd> = if disc.is_zero() {
        vec![QuadraticSurd::from_rational(center)]
    } else {
        vec![
            QuadraticSurd::new(center.clone(), -half_width.clone(), &disc),
            QuadraticSurd::new(center, half_width, &disc),
        ]
    };
    roots.retain(|t| t.is_positive());
    if roots.is_empty() {
        RootResult::NoRoot
    } else {
        RootResult::Roots(roots)
    }
}
