//! Browser bindings. Each exported function takes a JSON family description
//! and returns a JSON document; the plain `*_json` functions do the work and
//! are usable (and tested) natively.

use csc_core::continuation::{continue_branch, detect_branch_points, switch_branch_all};
use csc_core::exact::{format_rational, parse_rational, to_f64};
use csc_core::galerkin::GalerkinModel;
use csc_core::spectra::ManifoldDescriptor;
use csc_core::variation::{JointMode, SubmersionFamily, Window};
use csc_core::Rational;
use serde::Deserialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Factor {
    kind: String,
    #[serde(default)]
    dim: Option<u32>,
    #[serde(default = "one")]
    radius: String,
}

fn one() -> String {
    "1".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Family {
    fiber: Factor,
    base: Factor,
    #[serde(default = "zero")]
    a_norm_sq: String,
    t_min: String,
    t_max: String,
}

fn zero() -> String {
    "0".into()
}

fn rational(field: &str, text: &str) -> Result<Rational, String> {
    parse_rational(text).map_err(|e| format!("{field}: {e}"))
}

fn descriptor(section: &str, f: &Factor) -> Result<ManifoldDescriptor, String> {
    let r = rational(&format!("{section}.radius"), &f.radius)?;
    match f.kind.as_str() {
        "sphere" => {
            let dim = f.dim.ok_or(format!("{section}.dim is required"))?;
            ManifoldDescriptor::sphere(dim, r)
        }
        "circle" => ManifoldDescriptor::circle(r),
        other => return Err(format!("{section}.kind: unknown kind {other:?}")),
    }
    .map_err(|e| format!("{section}: {e}"))
}

fn parse(input: &str) -> Result<(SubmersionFamily, Window), String> {
    let f: Family = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let family = SubmersionFamily::new(
        descriptor("fiber", &f.fiber)?,
        descriptor("base", &f.base)?,
        rational("a_norm_sq", &f.a_norm_sq)?,
        JointMode::AllPairs,
    )
    .map_err(|e| e.to_string())?;
    let window = Window::new(rational("t_min", &f.t_min)?, rational("t_max", &f.t_max)?).map_err(|e| e.to_string())?;
    Ok((family, window))
}

/// Degeneracy instants, their certification and the stability threshold.
pub fn classify_json(input: &str) -> Result<Value, String> {
    let (family, window) = parse(input)?;
    let report = family.classify_window(&window).map_err(|e| e.to_string())?;
    let nondiscrete = report.nondiscrete.as_ref().is_some_and(|v| v.nondiscrete);
    let instants: Vec<Value> = report
        .instants
        .iter()
        .map(|c| {
            json!({
                "t": c.instant.t.to_f64(),
                "t_exact": c.instant.t.to_string(),
                "witnesses": c.instant.witnesses.iter()
                    .map(|w| format!("({}, {})", format_rational(&w.b), format_rational(&w.lambda_hat)))
                    .collect::<Vec<_>>(),
                "horizontal": c.instant.horizontal,
                "certified": c.certified(),
                "fiber_constant": c.fiber_constancy_guaranteed,
            })
        })
        .collect();
    Ok(json!({
        "nondiscrete": nondiscrete,
        "epsilon": report.epsilon.as_ref().map(|e| e.to_string()),
        "epsilon_note": report.epsilon_note,
        "agree_below_epsilon": report.agree_below_epsilon,
        "instants": instants,
    }))
}

/// Scalar curvature of the family on a geometric grid of the window, with
/// the degeneracy instants marked.
pub fn profile_json(input: &str, samples: usize) -> Result<Value, String> {
    let (family, window) = parse(input)?;
    let (lo, hi) = (to_f64(&window.t_min), to_f64(&window.t_max));
    let n = samples.max(2);
    let ts: Vec<f64> = (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect();
    let s: Vec<f64> = ts.iter().map(|&t| family.scalar_curvature_f64(t)).collect();
    let instants: Vec<f64> = match family.enumerate_degeneracy(&window) {
        Ok(d) => d.iter().map(|i| i.t.to_f64()).collect(),
        Err(_) => Vec::new(),
    };
    Ok(json!({ "t": ts, "scalar_curvature": s, "instants": instants }))
}

/// Branch points in the window and, from each, the branches followed
/// toward smaller `‖u - 1‖` as `(t, ‖u - 1‖)` curves.
pub fn diagram_json(input: &str, levels: usize, steps: usize, ds: f64) -> Result<Value, String> {
    let (family, window) = parse(input)?;
    let model = GalerkinModel::build(&family, levels.max(2), 4).map_err(|e| e.to_string())?;
    let bps = detect_branch_points(&model, to_f64(&window.t_min), to_f64(&window.t_max), 200)
        .map_err(|e| e.to_string())?;
    let mut curves = Vec::new();
    for bp in &bps {
        let Ok(starts) = switch_branch_all(&model, bp, 1e-2) else {
            continue;
        };
        for start in starts {
            let Ok(out) = continue_branch(&model, &start, 1, steps, ds) else {
                continue;
            };
            let mut pts: Vec<[f64; 2]> = vec![[bp.t, 0.0]];
            pts.extend(out.samples.iter().map(|s| [s.t, s.distance_from_one]));
            curves.push(json!({ "branch_point": bp.t, "stop": out.stop.as_str(), "points": pts }));
        }
    }
    Ok(json!({
        "branch_points": bps.iter().map(|b| b.t).collect::<Vec<_>>(),
        "curves": curves,
    }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn classify(input: &str) -> Result<String, JsError> {
    to_js(classify_json(input))
}

#[wasm_bindgen]
pub fn profile(input: &str, samples: usize) -> Result<String, JsError> {
    to_js(profile_json(input, samples))
}

#[wasm_bindgen]
pub fn diagram(input: &str, levels: usize, steps: usize, ds: f64) -> Result<String, JsError> {
    to_js(diagram_json(input, levels, steps, ds))
}
