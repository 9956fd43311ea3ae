//! The family configuration document (TOML).
//!
//! Numeric quantities that enter the exact classification are read as
//! rationals: TOML integers, strings such as `"1/4"` or `"0.05"`, and TOML
//! floats (taken as the exact decimal they print as, so `0.05` is `1/20`).

use std::fmt;

use csc_core::exact::{format_rational, parse_rational};
use csc_core::spectra::{EigenvalueEntry, ManifoldDescriptor, SpectrumModel};
use csc_core::variation::{JointMode, JointPair, JointSpectrum, SubmersionFamily, Window};
use csc_core::Rational;
use num_traits::Zero;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CliError;

/// An exact rational, serialized as `"p/q"`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Exact(pub Rational);

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(&self.0))
    }
}

struct ExactVisitor;

impl Visitor<'_> for ExactVisitor {
    type Value = Exact;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("an integer, a decimal, or a string like \"1/4\"")
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Exact, E> {
        Ok(Exact(Rational::from_integer(v.into())))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Exact, E> {
        Ok(Exact(Rational::from_integer(v.into())))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Exact, E> {
        if !v.is_finite() {
            return Err(E::custom(format!("non-finite number {v}")));
        }
        // `{:?}` prints the shortest decimal that reads back as `v`.
        parse_rational(&format!("{v:?}")).map(Exact).map_err(E::custom)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Exact, E> {
        parse_rational(v).map(Exact).map_err(E::custom)
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(ExactVisitor)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorKind {
    Sphere,
    Circle,
    /// Scalar curvature and a finite list of eigenvalues with multiplicities.
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorConfig {
    pub kind: FactorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<Exact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalar_curvature: Option<Exact>,
    /// `[[value, multiplicity], ...]`, ascending.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<(Exact, u64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complete_below: Option<Exact>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JointModeConfig {
    #[default]
    AllPairs,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointConfig {
    pub complete_below: Exact,
    /// Spectrum of the total space at `t = 1`, used to validate the pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<FactorConfig>,
    /// `[[b, lambda_hat, multiplicity], ...]`.
    pub pairs: Vec<(Exact, Exact, u64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub t_min: Exact,
    pub t_max: Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GalerkinConfig {
    #[serde(rename = "N_b")]
    pub n_b: usize,
    #[serde(rename = "N_f")]
    pub n_f: usize,
}

fn default_trials() -> usize {
    20
}

fn default_reduction_samples() -> usize {
    8
}

fn default_reduction_radius() -> f64 {
    1e-2
}

fn default_scan_samples() -> usize {
    400
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationConfig {
    pub ds: f64,
    pub steps: usize,
    pub amplitude: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_reduction_samples")]
    pub reduction_samples: usize,
    #[serde(default = "default_reduction_radius")]
    pub reduction_radius: f64,
    #[serde(default = "default_scan_samples")]
    pub scan_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub fiber: FactorConfig,
    pub base: FactorConfig,
    #[serde(default = "zero")]
    pub a_norm_sq: Exact,
    #[serde(default)]
    pub joint_mode: JointModeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<JointConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub galerkin: Option<GalerkinConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuation: Option<ContinuationConfig>,
}

fn zero() -> Exact {
    Exact(Rational::zero())
}

fn missing(section: &str, key: &str, kind: &str) -> CliError {
    CliError::Config(format!("{section}.{key} is required for kind = \"{kind}\""))
}

impl FactorConfig {
    pub fn descriptor(&self, section: &str) -> Result<ManifoldDescriptor, CliError> {
        let radius = || {
            self.radius
                .clone()
                .map(|r| r.0)
                .unwrap_or_else(|| Rational::from_integer(1.into()))
        };
        let descriptor = match self.kind {
            FactorKind::Sphere => {
                let dim = self.dim.ok_or_else(|| missing(section, "dim", "sphere"))?;
                ManifoldDescriptor::sphere(dim, radius())
            }
            FactorKind::Circle => ManifoldDescriptor::circle(radius()),
            FactorKind::Explicit => {
                let dim = self.dim.ok_or_else(|| missing(section, "dim", "explicit"))?;
                let scal = self
                    .scalar_curvature
                    .clone()
                    .ok_or_else(|| missing(section, "scalar_curvature", "explicit"))?;
                let entries: Vec<EigenvalueEntry> = self
                    .spectrum
                    .as_ref()
                    .ok_or_else(|| missing(section, "spectrum", "explicit"))?
                    .iter()
                    .map(|(v, m)| EigenvalueEntry::new(v.0.clone(), *m))
                    .collect();
                let spectrum = match &self.complete_below {
                    Some(cb) => SpectrumModel::explicit(entries, cb.0.clone()),
                    None => SpectrumModel::finite(entries),
                }
                .map_err(|e| CliError::Config(format!("{section}.spectrum: {e}")))?;
                let name = self.name.clone().unwrap_or_else(|| section.to_string());
                ManifoldDescriptor::new(name, dim, scal.0, spectrum)
            }
        }
        .map_err(|e| CliError::Config(format!("{section}: {e}")))?;
        Ok(match &self.name {
            Some(name) => ManifoldDescriptor {
                name: name.clone(),
                ..descriptor
            },
            None => descriptor,
        })
    }
}

impl FamilyConfig {
    /// Parses and validates a TOML document; diagnostics carry line and key.
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let config: FamilyConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_value(value: &serde_json::Value) -> Result<Self, CliError> {
        let config: FamilyConfig =
            serde_json::from_value(value.clone()).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    fn validate(&self) -> Result<(), CliError> {
        if let Some(w) = &self.window {
            if w.t_min.0 <= Rational::zero() || w.t_min.0 >= w.t_max.0 {
                return Err(CliError::Config(format!(
                    "window: need 0 < t_min < t_max, got t_min = {}, t_max = {}",
                    format_rational(&w.t_min.0),
                    format_rational(&w.t_max.0)
                )));
            }
        }
        match (self.joint_mode, &self.joint) {
            (JointModeConfig::Explicit, None) => {
                return Err(CliError::Config(
                    "joint_mode = \"explicit\" needs a [joint] section".into(),
                ))
            }
            (JointModeConfig::AllPairs, Some(_)) => {
                return Err(CliError::Config(
                    "[joint] is only allowed with joint_mode = \"explicit\"".into(),
                ))
            }
            _ => {}
        }
        if let Some(g) = &self.galerkin {
            if g.n_b < 2 || g.n_f < 2 {
                return Err(CliError::Config(format!(
                    "galerkin: N_b and N_f must be at least 2, got {} and {}",
                    g.n_b, g.n_f
                )));
            }
        }
        if let Some(c) = &self.continuation {
            if !(c.ds > 0.0) || !(c.amplitude > 0.0) || !c.ds.is_finite() || !c.amplitude.is_finite() {
                return Err(CliError::Config(
                    "continuation: ds and amplitude must be positive".into(),
                ));
            }
            if c.scan_samples < 2 {
                return Err(CliError::Config(
                    "continuation.scan_samples must be at least 2".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Result<SubmersionFamily, CliError> {
        let fiber = self.fiber.descriptor("fiber")?;
        let base = self.base.descriptor("base")?;
        let joint_mode = match &self.joint {
            None => JointMode::AllPairs,
            Some(j) => JointMode::ExplicitJoint(JointSpectrum {
                pairs: j
                    .pairs
                    .iter()
                    .map(|(b, l, m)| JointPair {
                        b: b.0.clone(),
                        lambda_hat: l.0.clone(),
                        multiplicity: *m,
                    })
                    .collect(),
                complete_below: j.complete_below.0.clone(),
                total_spectrum: j
                    .total
                    .as_ref()
                    .map(|t| t.descriptor("joint.total").map(|d| d.spectrum))
                    .transpose()?,
            }),
        };
        SubmersionFamily::new(fiber, base, self.a_norm_sq.0.clone(), joint_mode)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// The window from the document, unless overridden.
    pub fn window(&self, overridden: Option<&Window>) -> Result<Window, CliError> {
        if let Some(w) = overridden {
            return Ok(w.clone());
        }
        let w = self
            .window
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [window] section (or pass --window a..b)".into()))?;
        Window::new(w.t_min.0.clone(), w.t_max.0.clone()).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Parses `a..b` into a window.
pub fn parse_window(text: &str) -> Result<Window, CliError> {
    let (a, b) = text
        .split_once("..")
        .ok_or_else(|| CliError::Config(format!("--window expects a..b, got {text:?}")))?;
    let a = parse_rational(a).map_err(|e| CliError::Config(format!("--window: {e}")))?;
    let b = parse_rational(b).map_err(|e| CliError::Config(format!("--window: {e}")))?;
    Window::new(a, b).map_err(|e| CliError::Config(format!("--window: {e}")))
}
