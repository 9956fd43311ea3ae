//! The `classify`, `branch` and `verify` commands.

use std::path::PathBuf;

use csc_core::continuation::{
    continue_branch, detect_branch_points, lyapunov_schmidt_reduce, negative_count,
    switch_branch_all, verify_fiber_constancy, BranchPoint, BranchStart, FIBER_FRACTION_TOL,
    REDUCTION_TOL,
};
use csc_core::exact::{format_rational, to_f64};
use csc_core::galerkin::GalerkinModel;
use csc_core::variation::{
    Certification, ClassificationReport, DegeneracyInstant, SubmersionFamily, Window, Witness,
};
use csc_core::Error;
use serde_json::{json, Value};

use crate::config::{ContinuationConfig, FamilyConfig};
use crate::error::CliError;
use crate::output::{opt_real, real, write_atomic, Table};

pub const TOOL_NAME: &str = "cscbif";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug)]
pub struct Options {
    pub config: FamilyConfig,
    pub out: PathBuf,
    pub window: Option<Window>,
    pub seed: Option<u64>,
}

/// What a command wrote, and its structured report.
#[derive(Clone, Debug)]
pub struct CommandOutput {
    pub report: Value,
    pub files: Vec<PathBuf>,
}

fn window_json(w: &Window) -> Value {
    json!({ "t_min": format_rational(&w.t_min), "t_max": format_rational(&w.t_max) })
}

fn witnesses_cell(ws: &[Witness]) -> String {
    ws.iter()
        .map(|w| format!("{}:{}", format_rational(&w.b), format_rational(&w.lambda_hat)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn witnesses_json(ws: &[Witness]) -> Value {
    Value::Array(
        ws.iter()
            .map(|w| json!({ "b": format_rational(&w.b), "lambda_hat": format_rational(&w.lambda_hat) }))
            .collect(),
    )
}

fn instant_json(i: &DegeneracyInstant) -> Value {
    json!({
        "t": i.t.to_f64(),
        "t_exact": i.t.to_string(),
        "witnesses": witnesses_json(&i.witnesses),
        "horizontal": i.horizontal,
    })
}

fn envelope(command: &str, config: &FamilyConfig, seed: Option<u64>, results: Value, computed_by: Value) -> Value {
    json!({
        "tool": { "name": TOOL_NAME, "version": TOOL_VERSION },
        "command": command,
        "config": serde_json::to_value(config).expect("configuration serializes"),
        "seed": seed,
        "results": results,
        "computed_by": computed_by,
    })
}

fn write_report(out: &std::path::Path, report: &Value, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    files.push(write_atomic(out, "report.json", text.as_bytes())?);
    Ok(())
}

fn classification_json(family: &SubmersionFamily, report: &ClassificationReport) -> Value {
    let verdict = report.nondiscrete.clone().unwrap_or_else(|| {
        family
            .check_nondiscreteness()
            .expect("nondiscreteness was decided during classification")
    });
    let instants: Vec<Value> = report
        .instants
        .iter()
        .map(|c| {
            let mut v = instant_json(&c.instant);
            let (status, certificate) = match &c.certification {
                Certification::Certified(cert) => (
                    "certified",
                    json!({
                        "base_eigenvalue": format_rational(&cert.base_eigenvalue),
                        "index_below": cert.index_below,
                        "index_above": cert.index_above,
                        "witness_below": format_rational(&cert.witness_below),
                        "witness_above": format_rational(&cert.witness_above),
                    }),
                ),
                Certification::NotHorizontal => ("not-horizontal", Value::Null),
                Certification::Inconclusive(msg) => ("inconclusive", json!({ "reason": msg })),
            };
            v["certification"] = json!(status);
            v["certificate"] = certificate;
            v["fiber_constancy_guaranteed"] = json!(c.fiber_constancy_guaranteed);
            v
        })
        .collect();
    json!({
        "window": window_json(&report.window),
        "truncation_bounds": {
            "b_max": format_rational(&report.bounds.b_max),
            "lambda_hat_max": format_rational(&report.bounds.lambda_hat_max),
        },
        "nondiscreteness": {
            "verdict": if verdict.nondiscrete { "D = (0, inf)" } else { "D is discrete" },
            "nondiscrete": verdict.nondiscrete,
            "conditions": {
                "a_vanishes": verdict.conditions[0],
                "sigma_h_in_horizontal_spectrum": verdict.conditions[1],
                "sigma_f_in_fiber_spectrum": verdict.conditions[2],
                "pair_realized_nonzero": verdict.conditions[3],
            },
            "witness": verdict.witness.as_ref().map(|w| witnesses_json(std::slice::from_ref(w))[0].clone()),
        },
        "epsilon": report.epsilon.as_ref().map(|e| e.to_string()),
        "epsilon_note": report.epsilon_note,
        "regime": {
            "hypothesis": report.regime.hypothesis,
            "base_scalar_nonpositive": report.regime.base_scalar_nonpositive,
            "twisted": report.regime.twisted,
            "interchanged_product": report.regime.interchanged_product,
        },
        "agree_below_epsilon": report.agree_below_epsilon,
        "counts": {
            "D": report.instants.len(),
            "D_hor": report.horizontal.len(),
            "certified_B": report.certified().count(),
        },
        "instants": instants,
        "horizontal": report.horizontal.iter().map(instant_json).collect::<Vec<_>>(),
        "uncertified": report.uncertified().map(|c| c.instant.t.to_string()).collect::<Vec<_>>(),
    })
}

/// Classifies `D`, `D_hor` and certified bifurcation instants in the window.
pub fn classify(opts: &Options) -> Result<CommandOutput, CliError> {
    let family = opts.config.family()?;
    let window = opts.config.window(opts.window.as_ref())?;
    let report = family.classify_window(&window)?;

    let mut table = Table::new(&[
        "t",
        "t_exact",
        "witnesses",
        "horizontal",
        "certified",
        "fiber_constancy_guaranteed",
    ]);
    for c in &report.instants {
        table.push(vec![
            real(c.instant.t.to_f64()),
            c.instant.t.to_string(),
            witnesses_cell(&c.instant.witnesses),
            c.instant.horizontal.to_string(),
            c.certified().to_string(),
            c.fiber_constancy_guaranteed.to_string(),
        ]);
    }
    let mut files = vec![write_atomic(&opts.out, "instants.csv", table.render().as_bytes())?];
    let results = classification_json(&family, &report);
    let computed_by = json!([
        {
            "quantity": "instants, horizontal, certification",
            "operation": "variation.classify_window",
            "inputs": { "family": family.base.name.clone() + " x " + &family.fiber.name, "window": window_json(&window) },
        },
        {
            "quantity": "epsilon",
            "operation": "variation.stability_epsilon",
            "inputs": { "fiber": family.fiber.name, "base": family.base.name },
        },
        {
            "quantity": "nondiscreteness",
            "operation": "variation.check_nondiscreteness",
            "inputs": { "a_norm_sq": format_rational(&family.a_norm_sq) },
        },
    ]);
    let report = envelope("classify", &opts.config, opts.seed, results, computed_by);
    write_report(&opts.out, &report, &mut files)?;
    Ok(CommandOutput { report, files })
}

fn continuation_section(config: &FamilyConfig) -> Result<ContinuationConfig, CliError> {
    config
        .continuation
        .clone()
        .ok_or_else(|| CliError::Config("missing [continuation] section".into()))
}

/// Builds the Galerkin model, reporting unsupported geometry before
/// complaining about a missing `[galerkin]` section.
fn build_model(config: &FamilyConfig, family: &SubmersionFamily) -> Result<GalerkinModel, CliError> {
    match &config.galerkin {
        Some(g) => Ok(GalerkinModel::build(family, g.n_b, g.n_f)?),
        None => {
            GalerkinModel::build(family, 2, 2)?;
            Err(CliError::Config("missing [galerkin] section".into()))
        }
    }
}

fn branch_point_json(model: &GalerkinModel, bp: &BranchPoint) -> Value {
    let kernel: Vec<Value> = bp
        .kernel_modes
        .iter()
        .map(|&i| {
            let m = &model.modes()[i];
            json!({
                "index": i,
                "b": format_rational(&m.b),
                "lambda_hat": format_rational(&m.lambda_hat),
                "base_index": m.base_index,
                "fiber_index": m.fiber_index,
            })
        })
        .collect();
    let below = negative_count(model, bp.t * (1.0 - 1e-6)).ok();
    let above = negative_count(model, bp.t * (1.0 + 1e-6)).ok();
    json!({
        "t": bp.t,
        "kernel_modes": kernel,
        "horizontal": bp.is_horizontal(model),
        "predicted": bp.predicted_instant.as_ref().map(|p| json!({
            "t_exact": p.t.to_string(),
            "error": bp.prediction_error(),
            "witnesses": witnesses_json(&p.witnesses),
        })),
        "negative_count_below": below,
        "negative_count_above": above,
    })
}

fn scan(model: &GalerkinModel, window: &Window, cont: &ContinuationConfig) -> Result<Vec<BranchPoint>, CliError> {
    Ok(detect_branch_points(
        model,
        to_f64(&window.t_min),
        to_f64(&window.t_max),
        cont.scan_samples,
    )?)
}

/// Detects branch points, switches onto every distinct bifurcating branch
/// and follows it out and back toward the branch point.
pub fn branch(opts: &Options) -> Result<CommandOutput, CliError> {
    let family = opts.config.family()?;
    let window = opts.config.window(opts.window.as_ref())?;
    let model = build_model(&opts.config, &family)?;
    let cont = continuation_section(&opts.config)?;
    let seed = opts.seed.unwrap_or(cont.seed);
    let bps = scan(&model, &window, &cont)?;

    let mut files = Vec::new();
    let mut points = Vec::new();
    let mut branches = Vec::new();
    let mut index = 0;
    for bp in &bps {
        let mut entry = branch_point_json(&model, bp);
        let starts = match switch_branch_all(&model, bp, cont.amplitude) {
            Ok(s) => s,
            Err(e) => {
                entry["status"] = json!("no-branch");
                entry["error"] = json!(e.to_string());
                points.push(entry);
                continue;
            }
        };
        let mut ids = Vec::new();
        for start in starts {
            let followed = follow(&model, &start, &cont);
            let (outward, inward) = match followed {
                Ok(pair) => pair,
                Err(e) => {
                    ids.push(json!({ "error": e.to_string() }));
                    continue;
                }
            };
            index += 1;
            let name = format!("branch_{index}.csv");
            let mut table = Table::new(&["t", "norm_u_minus_1", "energy", "fiber_fraction", "residual_norm"]);
            for s in &inward.samples {
                table.push(vec![
                    real(s.t),
                    real(s.distance_from_one),
                    real(s.energy),
                    opt_real(s.fiber_fraction),
                    real(s.residual_norm),
                ]);
            }
            files.push(write_atomic(&opts.out, &name, table.render().as_bytes())?);
            let last = inward.samples.last().expect("nonempty branch");
            branches.push(json!({
                "index": index,
                "file": name,
                "branch_point_t": bp.t,
                "start_t": start.state.t,
                "side": if start.state.t < bp.t { "below" } else { "above" },
                "amplitude": cont.amplitude,
                "outward_stop": outward.stop.as_str(),
                "outward_samples": outward.samples.len(),
                "inward_stop": inward.stop.as_str(),
                "samples": inward.samples.len(),
                "final_t": last.t,
                "final_norm_u_minus_1": last.distance_from_one,
                "max_residual_norm": inward.samples.iter().map(|s| s.residual_norm).fold(0.0, f64::max),
            }));
            ids.push(json!(index));
        }
        entry["status"] = json!("ok");
        entry["branches"] = Value::Array(ids);
        points.push(entry);
    }

    let results = json!({
        "window": window_json(&window),
        "model": {
            "N_b": opts.config.galerkin.as_ref().map(|g| g.n_b),
            "N_f": opts.config.galerkin.as_ref().map(|g| g.n_f),
            "modes": model.n_modes(),
            "a_m": format_rational(&model.a_m_exact()),
            "p_m": format_rational(&model.p_m_exact()),
        },
        "branch_points": points,
        "branches": branches,
    });
    let computed_by = json!([
        { "quantity": "branch_points", "operation": "continuation.detect_branch_points",
          "inputs": { "window": window_json(&window), "n_samples": cont.scan_samples } },
        { "quantity": "branch starts", "operation": "continuation.switch_branch_all",
          "inputs": { "amplitude": cont.amplitude, "directions": 8 } },
        { "quantity": "branch samples", "operation": "continuation.continue_branch",
          "inputs": { "ds": cont.ds, "steps_outward": cont.steps, "steps_inward": 2 * cont.steps } },
    ]);
    let report = envelope("branch", &opts.config, Some(seed), results, computed_by);
    write_report(&opts.out, &report, &mut files)?;
    if !bps.is_empty() && index == 0 {
        return Err(CliError::ComputationFailed(
            "no bifurcating branch could be followed".into(),
        ));
    }
    Ok(CommandOutput { report, files })
}

/// Follows a switched branch outward for `steps`, then back toward the
/// branch point from its far end.
fn follow(
    model: &GalerkinModel,
    start: &BranchStart,
    cont: &ContinuationConfig,
) -> Result<(csc_core::continuation::Branch, csc_core::continuation::Branch), Error> {
    let outward = continue_branch(model, start, 1, cont.steps, cont.ds)?;
    let far = outward.samples.last().expect("nonempty branch");
    let back = BranchStart {
        state: far.state.clone(),
        residual_norm: far.residual_norm,
        ..start.clone()
    };
    let inward = continue_branch(model, &back, -1, 2 * cont.steps, cont.ds)?;
    Ok((outward, inward))
}

/// Double Lyapunov–Schmidt reduction and fiber-constancy trials at every
/// branch point in the window.
pub fn verify(opts: &Options) -> Result<CommandOutput, CliError> {
    let family = opts.config.family()?;
    let window = opts.config.window(opts.window.as_ref())?;
    let model = build_model(&opts.config, &family)?;
    let cont = continuation_section(&opts.config)?;
    let seed = opts.seed.unwrap_or(cont.seed);
    let bps = scan(&model, &window, &cont)?;

    let mut table = Table::new(&[
        "t",
        "kernel_dim",
        "horizontal",
        "reduction_discrepancy",
        "max_fiber_fraction",
        "converged_trials",
        "trials",
        "status",
        "detail",
    ]);
    let mut rows = Vec::new();
    let mut failures = 0;
    for bp in &bps {
        let reduction = lyapunov_schmidt_reduce(&model, bp, cont.reduction_radius, cont.reduction_samples, seed);
        let fiber = verify_fiber_constancy(&model, bp, cont.trials, cont.amplitude, seed);
        let mut details = Vec::new();
        let mut failed = false;
        let mut status = "pass";
        let discrepancy = match &reduction {
            Ok(r) => {
                if r.discrepancy >= REDUCTION_TOL {
                    failed = true;
                    status = "fail";
                    details.push(format!("reduction discrepancy {:e} >= {REDUCTION_TOL:e}", r.discrepancy));
                }
                Some(r.discrepancy)
            }
            Err(e) => {
                failed = true;
                status = match e {
                    Error::HypothesisViolated(_) => "hypothesis-violated",
                    _ => "reduction-failed",
                };
                details.push(e.to_string());
                None
            }
        };
        let (max_fraction, converged) = match &fiber {
            Ok(f) => {
                if !f.passed {
                    failed = true;
                    if status == "pass" {
                        status = "fail";
                    }
                    details.push(format!(
                        "fiber-constancy: {} of {} trials converged, max fraction {:e} (threshold {FIBER_FRACTION_TOL:e})",
                        f.converged,
                        f.trials.len(),
                        f.max_fraction
                    ));
                }
                (Some(f.max_fraction), Some(f.converged))
            }
            Err(Error::PreconditionViolated(msg)) => {
                if status == "pass" {
                    status = "outside-stability-window";
                }
                details.push(msg.clone());
                (None, None)
            }
            Err(e) => {
                failed = true;
                if status == "pass" {
                    status = "fail";
                }
                details.push(e.to_string());
                (None, None)
            }
        };
        if failed {
            failures += 1;
        }
        let detail = details.join("; ");
        table.push(vec![
            real(bp.t),
            bp.kernel_modes.len().to_string(),
            bp.is_horizontal(&model).to_string(),
            opt_real(discrepancy),
            opt_real(max_fraction),
            converged.map(|c| c.to_string()).unwrap_or_default(),
            cont.trials.to_string(),
            status.to_string(),
            detail.clone(),
        ]);
        let mut row = branch_point_json(&model, bp);
        row["status"] = json!(status);
        row["passed"] = json!(!failed);
        row["reduction_discrepancy"] = json!(discrepancy);
        row["reduced_map_max"] = json!(reduction.as_ref().ok().map(|r| r
            .samples
            .iter()
            .map(|s| s.reduced.amax())
            .fold(0.0, f64::max)));
        row["max_fiber_fraction"] = json!(max_fraction);
        row["converged_trials"] = json!(converged);
        row["detail"] = json!(detail);
        rows.push(row);
    }
    let mut files = vec![write_atomic(&opts.out, "verify.csv", table.render().as_bytes())?];
    let results = json!({
        "window": window_json(&window),
        "thresholds": { "reduction_discrepancy": REDUCTION_TOL, "fiber_fraction": FIBER_FRACTION_TOL },
        "rows": rows,
        "passed": failures == 0,
    });
    let computed_by = json!([
        { "quantity": "branch_points", "operation": "continuation.detect_branch_points",
          "inputs": { "window": window_json(&window), "n_samples": cont.scan_samples } },
        { "quantity": "reduction_discrepancy", "operation": "continuation.lyapunov_schmidt_reduce",
          "inputs": { "sample_radius": cont.reduction_radius, "n_samples": cont.reduction_samples, "seed": seed } },
        { "quantity": "max_fiber_fraction", "operation": "continuation.verify_fiber_constancy",
          "inputs": { "trials": cont.trials, "amplitude": cont.amplitude, "seed": seed } },
    ]);
    let report = envelope("verify", &opts.config, Some(seed), results, computed_by);
    write_report(&opts.out, &report, &mut files)?;
    if failures > 0 {
        return Err(CliError::VerificationFailed(format!(
            "{failures} of {} branch points failed",
            bps.len()
        )));
    }
    Ok(CommandOutput { report, files })
}
