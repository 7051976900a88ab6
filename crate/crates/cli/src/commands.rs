use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use cfl_core::norms::norm_2_upper;
use cfl_core::prelude::*;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use std::result::Result;

use crate::config::{self, Config, Overrides};
use crate::error::{CliError, InModule};
use crate::pipeline::{run_pipeline, select_params, PipelineOutput, Timings};

/// `x` with 17 significant digits, which round-trips every `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::config(format!("csv: {e}"));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row).map_err(fail)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::config(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::config(format!("csv: {e}")))
}

#[derive(Debug, Clone, Serialize)]
pub struct WallTimes {
    #[serde(flatten)]
    pub stages: Timings,
    pub total_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub config_path: String,
    pub problem_digest: String,
    pub regime: &'static str,
    pub params: ParamSet,
    pub estimate: C64,
    pub exact: C64,
    pub truncated_value: C64,
    pub measured_errors: MeasuredErrors,
    pub reference_method: &'static str,
    pub eta_measured: Vec<f64>,
    pub eta_total_measured: f64,
    pub bounds: Vec<BoundReport>,
    pub taylor_truncation_bound: f64,
    pub error_budget: ErrorBudget,
    pub resources: Option<ResourceEstimate>,
    pub resources_note: Option<String>,
    pub solve_residual: f64,
    pub wall_times: WallTimes,
}

const RESULT_HEADER: [&str; 20] = [
    "regime",
    "N",
    "k",
    "m",
    "h",
    "nu",
    "epsilon",
    "estimate_re",
    "estimate_im",
    "exact_re",
    "exact_im",
    "koopman_truncation_error",
    "taylor_truncation_error",
    "total_error",
    "eta_1_measured",
    "eta_1_bound_thm_inf_time",
    "eta_total_measured",
    "eta_bound_finite_time",
    "taylor_truncation_bound",
    "within_epsilon",
];

/// `(eta_1 bound, finite-time bound)`; only one applies per regime.
fn bound_columns(out: &PipelineOutput) -> (Option<f64>, Option<f64>) {
    let first = out.first_bound().map(|b| b.value);
    match out.params.regime {
        Regime::Dissipative => (first, None),
        Regime::Nondissipative => (None, first),
    }
}

fn result_row(out: &PipelineOutput) -> Vec<String> {
    let ps = &out.params;
    let (inf_time, finite_time) = bound_columns(out);
    vec![
        ps.regime.label().to_string(),
        ps.n_order.to_string(),
        ps.k.to_string(),
        ps.m.to_string(),
        fmt_f64(ps.h),
        fmt_f64(ps.nu),
        fmt_f64(ps.epsilon),
        fmt_f64(out.estimate.re),
        fmt_f64(out.estimate.im),
        fmt_f64(out.exact.re),
        fmt_f64(out.exact.im),
        fmt_f64(out.errors.koopman),
        fmt_f64(out.errors.taylor),
        fmt_f64(out.errors.total),
        opt_f64(out.eta_measured.first().copied()),
        opt_f64(inf_time),
        fmt_f64(out.eta_total),
        opt_f64(finite_time),
        fmt_f64(out.taylor_bound),
        (out.errors.total <= ps.epsilon).to_string(),
    ]
}

/// Runs the pipeline and writes `manifest.json` and `result.csv` into `out_dir`.
pub fn cmd_solve(
    config_path: &Path,
    out_dir: &Path,
    overrides: Option<&str>,
) -> Result<RunManifest, CliError> {
    let clock = Instant::now();
    let loaded = config::load(config_path)?;
    let extra = overrides.map(Overrides::parse).transpose()?.unwrap_or_default();
    let out = run_pipeline(&loaded.config, &extra, EncodingMode::Standard)?;

    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", out_dir.display())))?;
    let csv = csv_text(&RESULT_HEADER, &[result_row(&out)])?;
    write_file(&out_dir.join("result.csv"), csv.as_bytes())?;

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        config_path: config_path.display().to_string(),
        problem_digest: loaded.digest,
        regime: out.params.regime.label(),
        estimate: out.estimate,
        exact: out.exact,
        truncated_value: out.truncated_value,
        measured_errors: out.errors,
        reference_method: out.reference_method,
        eta_measured: out.eta_measured.clone(),
        eta_total_measured: out.eta_total,
        bounds: out.eta_bounds.clone(),
        taylor_truncation_bound: out.taylor_bound,
        error_budget: out.budget.clone(),
        resources: out.resources.clone(),
        resources_note: out.resources_note.clone(),
        solve_residual: out.solve_residual,
        wall_times: WallTimes {
            stages: out.timings.clone(),
            total_s: clock.elapsed().as_secs_f64(),
        },
        params: out.params,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::config(format!("json: {e}")))?;
    write_file(&out_dir.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Order,
    TaylorDegree,
    R,
    Nu,
    Epsilon,
}

impl FromStr for SweepAxis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "N" => Ok(SweepAxis::Order),
            "k" => Ok(SweepAxis::TaylorDegree),
            "r" => Ok(SweepAxis::R),
            "nu" => Ok(SweepAxis::Nu),
            "epsilon" => Ok(SweepAxis::Epsilon),
            other => Err(CliError::config(format!(
                "unknown sweep axis `{other}` (expected N, k, r, nu or epsilon)"
            ))),
        }
    }
}

impl SweepAxis {
    fn name(self) -> &'static str {
        match self {
            SweepAxis::Order => "N",
            SweepAxis::TaylorDegree => "k",
            SweepAxis::R => "r",
            SweepAxis::Nu => "nu",
            SweepAxis::Epsilon => "epsilon",
        }
    }

    /// The config and overrides for one sweep value.
    fn apply(self, base: &Config, value: &str) -> Result<(Config, Overrides), CliError> {
        let mut cfg = base.clone();
        let mut extra = Overrides::default();
        let int = || {
            value
                .parse::<usize>()
                .map_err(|_| CliError::config(format!("`{value}` is not a non-negative integer")))
        };
        let real = || {
            value
                .parse::<f64>()
                .map_err(|_| CliError::config(format!("`{value}` is not a number")))
        };
        match self {
            SweepAxis::Order => extra.n_order = Some(int()?),
            SweepAxis::TaylorDegree => extra.k = Some(int()?),
            SweepAxis::R => cfg.run.r = Some(real()?),
            SweepAxis::Nu => {
                let v = real()?;
                cfg.run.nu = Some(v);
                extra.nu = Some(v);
            }
            SweepAxis::Epsilon => cfg.run.epsilon = real()?,
        }
        cfg.validate()?;
        Ok((cfg, extra))
    }
}

pub const SWEEP_HEADER: [&str; 16] = [
    "axis",
    "value",
    "regime",
    "N",
    "k",
    "m",
    "nu",
    "eta_1_measured",
    "eta_1_bound_thm_inf_time",
    "eta_total_measured",
    "eta_bound_finite_time",
    "koopman_truncation_error",
    "taylor_truncation_error",
    "total_error",
    "runtime_s",
    "error",
];

fn sweep_row(axis: SweepAxis, base: &Config, value: &str) -> Vec<String> {
    let clock = Instant::now();
    let result = axis
        .apply(base, value)
        .and_then(|(cfg, extra)| run_pipeline(&cfg, &extra, EncodingMode::Standard));
    let runtime = fmt_f64(clock.elapsed().as_secs_f64());
    let mut row = vec![axis.name().to_string(), value.to_string()];
    match result {
        Ok(out) => {
            let ps = &out.params;
            let (inf_time, finite_time) = bound_columns(&out);
            row.extend([
                ps.regime.label().to_string(),
                ps.n_order.to_string(),
                ps.k.to_string(),
                ps.m.to_string(),
                fmt_f64(ps.nu),
                opt_f64(out.eta_measured.first().copied()),
                opt_f64(inf_time),
                fmt_f64(out.eta_total),
                opt_f64(finite_time),
                fmt_f64(out.errors.koopman),
                fmt_f64(out.errors.taylor),
                fmt_f64(out.errors.total),
                runtime,
                String::new(),
            ]);
        }
        Err(e) => {
            row.extend(std::iter::repeat(String::new()).take(12));
            row.push(runtime);
            row.push(e.to_string());
        }
    }
    row
}

/// One CSV row per value, in the order given. Rows run in parallel; each row
/// is computed sequentially, so its numbers do not depend on scheduling.
pub fn cmd_sweep(config_path: &Path, axis: SweepAxis, values: &[String]) -> Result<String, CliError> {
    let loaded = config::load(config_path)?;
    let rows: Vec<Vec<String>> = values
        .par_iter()
        .map(|v| sweep_row(axis, &loaded.config, v))
        .collect();
    csv_text(&SWEEP_HEADER, &rows)
}

/// Splits `v1,v2,...`, dropping empty entries.
pub fn parse_values(text: &str) -> Vec<String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

/// Exact 2-norm only below this lifted size; above it the cheap
/// `sqrt(|L|_1 |L|_inf)` bound is the only check.
const DENSE_SVD_LIMIT: usize = 512;

fn dense_check(ps: &ParamSet, ode: &FourierOde, readout: &ReadoutSpec, alpha_ln: f64) -> Value {
    let attempt = || -> cfl_core::Result<Value> {
        let rescaled = rescale(ode, readout, ps.nu)?;
        let op = LinearOperatorLN::new(&rescaled, ps.n_order)?;
        let size = op.total_len();
        if size > dense_budget() {
            return Ok(
                json!({"status": "skipped", "reason": format!("lifted size {size} exceeds the dense budget")}),
            );
        }
        let dense = dense_ln(&op)?;
        let upper = norm_2_upper(&dense);
        if upper <= alpha_ln {
            return Ok(json!({
                "status": "checked",
                "method": "sqrt(|L|_1 |L|_inf)",
                "alpha_ln": alpha_ln,
                "norm_upper_bound": upper,
                "dominates": true,
            }));
        }
        if size > DENSE_SVD_LIMIT {
            return Ok(json!({
                "status": "inconclusive",
                "alpha_ln": alpha_ln,
                "norm_upper_bound": upper,
            }));
        }
        let exact = op_norm(&dense, 2.0)?;
        Ok(json!({
            "status": "checked",
            "method": "singular values",
            "alpha_ln": alpha_ln,
            "norm_2": exact,
            "dominates": alpha_ln >= exact,
        }))
    };
    attempt().unwrap_or_else(|e| json!({"status": "failed", "reason": e.to_string()}))
}

fn refused(reason: String, log: Vec<cfl_core::bounds::HypothesisEntry>, extra: Value) -> Value {
    let mut v = json!({"status": "refused", "reason": reason, "hypothesis_log": log});
    if let (Value::Object(map), Value::Object(more)) = (&mut v, extra) {
        map.extend(more);
    }
    v
}

fn estimate_entry(ps: ParamSet, ode: &FourierOde, readout: &ReadoutSpec, mode: EncodingMode) -> Value {
    match query_counts(&ps, mode) {
        Ok(est) => {
            let check = dense_check(&ps, ode, readout, est.alpha_ln);
            json!({"status": "ok", "params": ps, "estimate": est, "dense_check": check})
        }
        Err(e) => refused(e.to_string(), Vec::new(), json!({"params": ps})),
    }
}

/// Parameters and resource estimates for both regimes where their
/// hypotheses hold. Returns the JSON report and whether any regime succeeded.
pub fn cmd_estimate(config_path: &Path, improved: bool) -> Result<(Value, bool), CliError> {
    let loaded = config::load(config_path)?;
    let cfg = &loaded.config;
    let run = &cfg.run;
    let ode = cfg.ode()?;
    let readout = cfg.readout()?;
    let mode = if improved {
        EncodingMode::Improved
    } else {
        EncodingMode::Standard
    };

    let mut dis_cfg = cfg.clone();
    dis_cfg.run.regime = config::RegimeChoice::Dissipative;
    let dissipative = match select_params(&dis_cfg, &ode, &readout) {
        Ok(ps) => estimate_entry(ps, &ode, &readout, mode),
        Err(e) => refused(e.message, e.hypothesis_log, json!({})),
    };

    let nondissipative = match (run.r, run.nu) {
        (Some(r), Some(nu)) => {
            let horizon_limit = rescale(&ode, &readout, nu).in_module("problem").and_then(|resc| {
                t_max_nondissipative(&resc, r, run.p, run.alpha.unwrap_or(ode.g0_max())).in_module("bounds")
            });
            match horizon_limit {
                Err(e) => refused(e.message, Vec::new(), json!({})),
                Ok(t_max) if run.horizon > t_max => refused(
                    format!("T = {} exceeds T~max = {t_max}", run.horizon),
                    Vec::new(),
                    json!({"t_max": t_max}),
                ),
                Ok(t_max) => {
                    let mut nd_cfg = cfg.clone();
                    nd_cfg.run.regime = config::RegimeChoice::Nondissipative;
                    match select_params(&nd_cfg, &ode, &readout) {
                        Ok(ps) => {
                            let mut v = estimate_entry(ps, &ode, &readout, mode);
                            v["t_max"] = json!(t_max);
                            v
                        }
                        Err(e) => refused(e.message, e.hypothesis_log, json!({"t_max": t_max})),
                    }
                }
            }
        }
        _ => refused("needs run.r and run.nu".into(), Vec::new(), json!({})),
    };

    let any_ok = [&dissipative, &nondissipative]
        .iter()
        .any(|v| v["status"] == "ok");
    let report = json!({
        "config_path": config_path.display().to_string(),
        "problem_digest": loaded.digest,
        "mode": mode,
        "units": cfl_core::estimator::UNITS,
        "dissipative": dissipative,
        "nondissipative": nondissipative,
    });
    Ok((report, any_ok))
}

/// Dumps the reference trajectory of the rescaled variable `x` (with
/// `nu = run.nu`, default 1 so that `x = u`) to `trajectory.csv`.
pub fn cmd_oracle(config_path: &Path, out_dir: &Path) -> Result<PathBuf, CliError> {
    let loaded = config::load(config_path)?;
    let cfg = &loaded.config;
    let ode = cfg.ode()?;
    let readout = cfg.readout()?;
    let rescaled = rescale(&ode, &readout, cfg.run.nu.unwrap_or(1.0)).in_module("problem")?;
    let field = FourierField::from_rescaled(&rescaled);
    let traj = integrate(
        &field,
        rescaled.x0.as_slice(),
        cfg.run.horizon,
        cfg.run.oracle_tol,
    )
    .in_module("oracle")?;

    let n = rescaled.dim();
    let mut header = vec!["t".to_string()];
    for i in 1..=n {
        header.push(format!("re(x_{i})"));
        header.push(format!("im(x_{i})"));
    }
    let points = cfg.run.trajectory_points;
    let mut rows = Vec::with_capacity(points);
    for i in 0..points {
        let t = cfg.run.horizon * i as f64 / (points - 1) as f64;
        let x = traj.state_at(t).in_module("oracle")?;
        let mut row = vec![fmt_f64(t)];
        for z in x {
            row.push(fmt_f64(z.re));
            row.push(fmt_f64(z.im));
        }
        rows.push(row);
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let text = csv_text(&header_refs, &rows)?;
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", out_dir.display())))?;
    let path = out_dir.join("trajectory.csv");
    write_file(&path, text.as_bytes())?;
    Ok(path)
}
