//! Exact Laplace spectra of model closed manifolds and their products.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::exact::{format_rational, int, Rational};

/// A distinct eigenvalue of `-Δ` together with its multiplicity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EigenvalueEntry {
    pub value: Rational,
    pub multiplicity: u64,
}

impl EigenvalueEntry {
    pub fn new(value: Rational, multiplicity: u64) -> Self {
        Self { value, multiplicity }
    }
}

#[derive(Clone, Debug)]
pub enum SpectrumKind {
    /// Round sphere `S^dim` of the given radius.
    Sphere { dim: u32, radius: Rational },
    /// Finite list, known to be the full spectrum on `[0, complete_below]`.
    /// `None` means the list is the whole spectrum.
    Explicit {
        entries: Vec<EigenvalueEntry>,
        complete_below: Option<Rational>,
    },
    /// Spectrum of a Riemannian product: the sum-set of the factors.
    ProductSum(SpectrumModel, SpectrumModel),
}

/// Lazily enumerable, strictly increasing sequence of eigenvalues of a
/// nonnegative Laplace-type operator. Cheap to clone.
#[derive(Clone, Debug)]
pub struct SpectrumModel {
    kind: Arc<SpectrumKind>,
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

/// Multiplicity of the `k`-th eigenvalue of the round `S^n`.
pub fn sphere_multiplicity(n: u32, k: u64) -> u64 {
    if n == 1 {
        return if k == 0 { 1 } else { 2 };
    }
    let n = u64::from(n);
    let lower = if k >= 2 { binomial(n + k - 2, k - 2) } else { 0 };
    u64::try_from(binomial(n + k, k) - lower).expect("sphere multiplicity overflows u64")
}

impl SpectrumModel {
    fn from_kind(kind: SpectrumKind) -> Self {
        Self { kind: Arc::new(kind) }
    }

    pub fn kind(&self) -> &SpectrumKind {
        &self.kind
    }

    /// Spectrum of the round `S^n` of radius `radius`: `k(k+n-1)/r²`.
    pub fn sphere(n: u32, radius: Rational) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("sphere dimension must be >= 1".into()));
        }
        if !radius.is_positive() {
            return Err(Error::InvalidArgument(format!(
                "sphere radius must be positive, got {}",
                format_rational(&radius)
            )));
        }
        Ok(Self::from_kind(SpectrumKind::Sphere { dim: n, radius }))
    }

    /// User-supplied spectrum, complete on `[0, complete_below]`.
    pub fn explicit(entries: Vec<EigenvalueEntry>, complete_below: Rational) -> Result<Self> {
        Self::validate_entries(&entries)?;
        if let Some(last) = entries.last() {
            if complete_below < last.value {
                return Err(Error::InvalidArgument(format!(
                    "completeness bound {} lies below the last listed eigenvalue {}",
                    format_rational(&complete_below),
                    format_rational(&last.value)
                )));
            }
        }
        Ok(Self::from_kind(SpectrumKind::Explicit {
            entries,
            complete_below: Some(complete_below),
        }))
    }

    /// A finite list that is the entire spectrum.
    pub fn finite(entries: Vec<EigenvalueEntry>) -> Result<Self> {
        Self::validate_entries(&entries)?;
        Ok(Self::from_kind(SpectrumKind::Explicit {
            entries,
            complete_below: None,
        }))
    }

    /// Spectrum of a point: `{(0, 1)}`.
    pub fn point() -> Self {
        Self::from_kind(SpectrumKind::Explicit {
            entries: vec![EigenvalueEntry::new(Rational::zero(), 1)],
            complete_below: None,
        })
    }

    pub fn product(a: &SpectrumModel, b: &SpectrumModel) -> Self {
        Self::from_kind(SpectrumKind::ProductSum(a.clone(), b.clone()))
    }

    fn validate_entries(entries: &[EigenvalueEntry]) -> Result<()> {
        for e in entries {
            if e.value.is_negative() {
                return Err(Error::InvalidArgument(format!(
                    "negative eigenvalue {}",
                    format_rational(&e.value)
                )));
            }
            if e.multiplicity == 0 {
                return Err(Error::InvalidArgument("multiplicity must be >= 1".into()));
            }
        }
        if let Some(w) = entries.windows(2).find(|w| w[1].value <= w[0].value) {
            return Err(Error::InvalidArgument(format!(
                "eigenvalues must be strictly ascending ({} then {})",
                format_rational(&w[0].value),
                format_rational(&w[1].value)
            )));
        }
        Ok(())
    }

    /// Largest value up to which enumeration is exhaustive; `None` if unbounded.
    pub fn completeness_bound(&self) -> Option<Rational> {
        match &*self.kind {
            SpectrumKind::Sphere { .. } => None,
            SpectrumKind::Explicit { complete_below, .. } => complete_below.clone(),
            SpectrumKind::ProductSum(a, b) => {
                // Values of the product up to X need each factor up to X - min(other).
                let lift = |bound: Option<Rational>, other: &SpectrumModel| {
                    bound.map(|x| x + other.min_value())
                };
                match (lift(a.completeness_bound(), b), lift(b.completeness_bound(), a)) {
                    (None, None) => None,
                    (Some(x), None) | (None, Some(x)) => Some(x),
                    (Some(x), Some(y)) => Some(x.min(y)),
                }
            }
        }
    }

    fn min_value(&self) -> Rational {
        match &*self.kind {
            SpectrumKind::Sphere { .. } => Rational::zero(),
            SpectrumKind::Explicit { entries, .. } => entries
                .first()
                .map(|e| e.value.clone())
                .unwrap_or_else(Rational::zero),
            SpectrumKind::ProductSum(a, b) => a.min_value() + b.min_value(),
        }
    }

    fn check_complete(&self, bound: &Rational) -> Result<()> {
        match self.completeness_bound() {
            Some(cb) if *bound > cb => Err(Error::IncompleteSpectrum {
                requested: format_rational(bound),
                complete_below: format_rational(&cb),
            }),
            _ => Ok(()),
        }
    }

    /// All distinct eigenvalues `<= bound`, ascending.
    pub fn entries_up_to(&self, bound: &Rational) -> Result<Vec<EigenvalueEntry>> {
        if bound.is_negative() {
            return Ok(Vec::new());
        }
        self.check_complete(bound)?;
        match &*self.kind {
            SpectrumKind::Sphere { dim, radius } => {
                let r2 = radius * radius;
                let mut out = Vec::new();
                for k in 0u64.. {
                    let value = int((k * (k + u64::from(*dim) - 1)) as i64) / &r2;
                    if value > *bound {
                        break;
                    }
                    out.push(EigenvalueEntry::new(value, sphere_multiplicity(*dim, k)));
                }
                Ok(out)
            }
            SpectrumKind::Explicit { entries, .. } => Ok(entries
                .iter()
                .take_while(|e| e.value <= *bound)
                .cloned()
                .collect()),
            SpectrumKind::ProductSum(a, b) => {
                let left = a.entries_up_to(&(bound - b.min_value()))?;
                let right = b.entries_up_to(&(bound - a.min_value()))?;
                let mut merged: BTreeMap<Rational, u64> = BTreeMap::new();
                for x in &left {
                    for y in &right {
                        let v = &x.value + &y.value;
                        if v <= *bound {
                            *merged.entry(v).or_default() += x.multiplicity * y.multiplicity;
                        }
                    }
                }
                Ok(merged
                    .into_iter()
                    .map(|(value, multiplicity)| EigenvalueEntry { value, multiplicity })
                    .collect())
            }
        }
    }

    /// The `k`-th distinct eigenvalue (0-based).
    pub fn entry(&self, k: usize) -> Result<EigenvalueEntry> {
        match &*self.kind {
            SpectrumKind::Sphere { dim, radius } => {
                let kk = k as u64;
                let value = int((kk * (kk + u64::from(*dim) - 1)) as i64) / (radius * radius);
                Ok(EigenvalueEntry::new(value, sphere_multiplicity(*dim, kk)))
            }
            SpectrumKind::Explicit {
                entries,
                complete_below,
            } => entries.get(k).cloned().ok_or_else(|| Error::IncompleteSpectrum {
                requested: format!("entry #{k}"),
                complete_below: complete_below
                    .as_ref()
                    .map(format_rational)
                    .unwrap_or_else(|| "end of finite spectrum".into()),
            }),
            SpectrumKind::ProductSum(..) => {
                // Grow the window until it holds k+1 values.
                let mut bound = Rational::one() + self.min_value();
                loop {
                    let capped = match self.completeness_bound() {
                        Some(cb) if bound > cb => cb,
                        _ => bound.clone(),
                    };
                    let entries = self.entries_up_to(&capped)?;
                    if entries.len() > k {
                        return Ok(entries[k].clone());
                    }
                    if capped < bound {
                        return Err(Error::IncompleteSpectrum {
                            requested: format!("entry #{k}"),
                            complete_below: format_rational(&capped),
                        });
                    }
                    bound = &bound * int(2);
                }
            }
        }
    }

    /// Lazy enumeration of distinct eigenvalues in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = Result<EigenvalueEntry>> + '_ {
        (0usize..).map(move |k| self.entry(k))
    }

    /// Number of eigenvalues (with multiplicity) strictly below `x`.
    pub fn count_strictly_below(&self, x: &Rational) -> Result<u64> {
        if !x.is_positive() {
            return Ok(0);
        }
        Ok(self
            .entries_up_to(x)?
            .iter()
            .filter(|e| e.value < *x)
            .map(|e| e.multiplicity)
            .sum())
    }

    pub fn multiplicity_of(&self, x: &Rational) -> Result<u64> {
        if x.is_negative() {
            return Ok(0);
        }
        Ok(self
            .entries_up_to(x)?
            .last()
            .filter(|e| e.value == *x)
            .map_or(0, |e| e.multiplicity))
    }

    pub fn contains(&self, x: &Rational) -> Result<bool> {
        Ok(self.multiplicity_of(x)? > 0)
    }

    /// Least positive eigenvalue.
    pub fn first_nonzero(&self) -> Result<Rational> {
        self.iter()
            .find_map(|e| match e {
                Ok(e) if e.value.is_zero() => None,
                Ok(e) => Some(Ok(e.value)),
                Err(err) => Some(Err(err)),
            })
            .expect("spectrum enumeration is unbounded or errors out")
    }
}

/// A closed manifold with constant scalar curvature and a known spectrum.
#[derive(Clone, Debug)]
pub struct ManifoldDescriptor {
    pub name: String,
    pub dim: u32,
    pub scalar_curvature: Rational,
    pub spectrum: SpectrumModel,
}

impl ManifoldDescriptor {
    pub fn new(
        name: impl Into<String>,
        dim: u32,
        scalar_curvature: Rational,
        spectrum: SpectrumModel,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("manifold dimension must be >= 1".into()));
        }
        let first = spectrum.entry(0)?;
        if !first.value.is_zero() || first.multiplicity != 1 {
            return Err(Error::InvalidArgument(format!(
                "spectrum of a connected closed manifold must start with (0, 1), got ({}, {})",
                format_rational(&first.value),
                first.multiplicity
            )));
        }
        Ok(Self {
            name: name.into(),
            dim,
            scalar_curvature,
            spectrum,
        })
    }

    /// Round `S^n(radius)`, scalar curvature `n(n-1)/radius²`.
    pub fn sphere(n: u32, radius: Rational) -> Result<Self> {
        let spectrum = SpectrumModel::sphere(n, radius.clone())?;
        let nn = i64::from(n);
        let scal = int(nn * (nn - 1)) / (&radius * &radius);
        let name = if n == 1 {
            format!("S^1({})", format_rational(&radius))
        } else {
            format!("S^{n}({})", format_rational(&radius))
        };
        Self::new(name, n, scal, spectrum)
    }

    pub fn circle(radius: Rational) -> Result<Self> {
        Self::sphere(1, radius)
    }
}
