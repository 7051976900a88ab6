use std::path::{Path, PathBuf};
use std::process::Command;

use cfl_cli::commands::{cmd_estimate, cmd_oracle, cmd_solve, cmd_sweep, SweepAxis, SWEEP_HEADER};
use cfl_cli::config;
use cfl_core::prelude::*;
use serde_json::Value;

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(format!("{name}.json"))
}

/// Writes a variant of a bundled config with `edit` applied to its JSON.
fn variant(dir: &Path, name: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(bundled(name)).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join(format!("{name}_variant.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn cfl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cfl"))
        .args(args)
        .output()
        .unwrap()
}

fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn linear_problem_within_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let m = cmd_solve(&bundled("linear"), dir.path(), None).unwrap();
    assert!(
        m.measured_errors.total <= m.params.epsilon,
        "{:?}",
        m.measured_errors
    );
    assert!(dir.path().join("manifest.json").exists());
    assert!(dir.path().join("result.csv").exists());
}

#[test]
fn scalar_example_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let m = cmd_solve(&bundled("scalar"), dir.path(), None).unwrap();
    let cfg = config::load(&bundled("scalar")).unwrap().config;
    let ode = cfg.ode().unwrap();
    let w = closed_form_1d(ode.g0[0], ode.g1[(0, 0)], ode.u0[0], cfg.run.horizon).unwrap();
    // The readout is `g(u) = exp(i u)`.
    let g = cfg.readout().unwrap();
    assert_eq!(g.degree, 1);
    assert!(
        (m.estimate - w).norm() <= m.params.epsilon,
        "{} vs {w}",
        m.estimate
    );
    assert!((m.exact - w).norm() < 1e-9);
}

#[test]
fn manifest_records_inputs_and_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let m = cmd_solve(&bundled("pair"), dir.path(), Some("N=5")).unwrap();
    assert_eq!(m.params.n_order, 5);
    assert!(m.params.logged("override:N").is_some());
    assert_eq!(m.problem_digest.len(), 64);
    assert_eq!(m.eta_measured.len(), 5);
    for (eta, bound) in m.eta_measured.iter().zip(&m.bounds) {
        assert!(bound.hypotheses_met);
        assert!(*eta <= bound.value, "{eta} > {}", bound.value);
    }
    let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    for key in [
        "problem_digest",
        "regime",
        "params",
        "measured_errors",
        "bounds",
        "resources",
        "wall_times",
    ] {
        assert!(v.get(key).is_some(), "manifest lacks {key}");
    }
}

#[test]
fn short_time_example_within_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let m = cmd_solve(&bundled("short_time"), dir.path(), None).unwrap();
    assert_eq!(m.regime, "nondissipative");
    assert!(m.measured_errors.total <= m.params.epsilon);
    let bound = &m.bounds[0];
    assert!(bound.hypotheses_met);
    assert!(m.eta_total_measured <= bound.value);
}

#[test]
fn exit_code_success() {
    let dir = tempfile::tempdir().unwrap();
    let out = cfl(&[
        "solve",
        bundled("scalar").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn exit_code_config_error_for_nonpositive_nu() {
    let dir = tempfile::tempdir().unwrap();
    let path = variant(dir.path(), "short_time", |v| v["run"]["nu"] = (-1.0).into());
    let out = cfl(&[
        "solve",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "config");
    assert!(err["message"].as_str().unwrap().contains("nu"));
}

#[test]
fn exit_code_config_error_for_missing_file_and_bad_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = cfl(&["solve", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = cfl(&[
        "solve",
        bundled("scalar").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--param-overrides",
        "q=3",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_code_hypothesis_violation() {
    let dir = tempfile::tempdir().unwrap();
    // nu below the sqrt(2)|exp(i u0)|_2 and r|exp(i u0)|_p floors.
    let path = variant(dir.path(), "short_time", |v| v["run"]["nu"] = 1.0.into());
    let out = cfl(&[
        "solve",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "hypothesis");
    assert_eq!(err["module"], "params");
}

#[test]
fn exit_code_numeric_divergence() {
    let dir = tempfile::tempdir().unwrap();
    // |L| h = 2000 with a degree-300 Taylor step overflows.
    let path = variant(dir.path(), "scalar", |v| {
        v["ode"]["g0"] = serde_json::json!([[2000.0, 1.0]]);
        v["ode"]["g1"] = serde_json::json!([[[0.0, 0.0]]]);
        v["overrides"] = serde_json::json!({"m": 1, "k": 300});
    });
    let out = cfl(&[
        "solve",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "numeric");
    assert_eq!(err["module"], "taylor_solver");
}

#[test]
fn hypothesis_errors_carry_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let path = variant(dir.path(), "pair", |v| v["run"]["regime"] = "dissipative".into());
    let path = {
        let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        v["ode"]["g0"][0][1] = (-0.5).into();
        std::fs::write(&path, v.to_string()).unwrap();
        path
    };
    let out = cfl(&[
        "solve",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    let log = err["hypothesis_log"].as_array().unwrap();
    assert!(log.iter().any(|e| e["holds"] == false));
}

#[test]
fn order_sweep_measured_below_bound() {
    let values: Vec<String> = (2..=6).map(|n| n.to_string()).collect();
    let csv = cmd_sweep(&bundled("pair"), SweepAxis::Order, &values).unwrap();
    let (header, rows) = parse_csv(&csv);
    assert_eq!(rows.len(), values.len());
    let (eta, bound, err) = (
        column(&header, "eta_1_measured"),
        column(&header, "eta_1_bound_thm_inf_time"),
        column(&header, "error"),
    );
    for (row, v) in rows.iter().zip(&values) {
        assert_eq!(&row[1], v, "rows keep input order");
        assert!(row[err].is_empty(), "{}", row[err]);
        let measured: f64 = row[eta].parse().unwrap();
        let bounded: f64 = row[bound].parse().unwrap();
        assert!(measured <= bounded, "{measured} > {bounded}");
    }
}

#[test]
fn epsilon_sweep_order_non_decreasing() {
    let values: Vec<String> = ["1e-2", "1e-3", "1e-4"].map(String::from).to_vec();
    let csv = cmd_sweep(&bundled("scalar"), SweepAxis::Epsilon, &values).unwrap();
    let (header, rows) = parse_csv(&csv);
    let n = column(&header, "N");
    let orders: Vec<usize> = rows.iter().map(|r| r[n].parse().unwrap()).collect();
    assert!(orders.windows(2).all(|w| w[0] <= w[1]), "{orders:?}");
}

#[test]
fn empty_sweep_is_header_only() {
    let csv = cmd_sweep(&bundled("scalar"), SweepAxis::Order, &[]).unwrap();
    let (header, rows) = parse_csv(&csv);
    assert!(rows.is_empty());
    assert_eq!(header, SWEEP_HEADER.map(String::from).to_vec());
    let out = cfl(&[
        "sweep",
        bundled("scalar").to_str().unwrap(),
        "--axis",
        "N",
        "--values",
        "",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1);
}

#[test]
fn sweep_row_errors_do_not_stop_the_sweep() {
    let values: Vec<String> = ["1", "x", "3"].map(String::from).to_vec();
    let csv = cmd_sweep(&bundled("pair"), SweepAxis::Order, &values).unwrap();
    let (header, rows) = parse_csv(&csv);
    let err = column(&header, "error");
    assert!(!rows[0][err].is_empty(), "order 1 is below the readout degree");
    assert!(!rows[1][err].is_empty());
    assert!(rows[2][err].is_empty());
    let out = cfl(&[
        "sweep",
        bundled("pair").to_str().unwrap(),
        "--axis",
        "T",
        "--values",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn estimate_dissipative_cross_checks_alpha_ln() {
    let (report, any_ok) = cmd_estimate(&bundled("pair"), false).unwrap();
    assert!(any_ok);
    let dis = &report["dissipative"];
    assert_eq!(dis["status"], "ok");
    let alpha_ln = dis["estimate"]["alpha_ln"].as_f64().unwrap();
    assert!(alpha_ln > 0.0);
    assert_eq!(dis["dense_check"]["dominates"], true);
    assert_eq!(report["nondissipative"]["status"], "refused");
}

#[test]
fn estimate_refuses_at_r_equal_e() {
    let dir = tempfile::tempdir().unwrap();
    let path = variant(dir.path(), "short_time", |v| {
        v["run"]["r"] = std::f64::consts::E.into()
    });
    let (report, any_ok) = cmd_estimate(&path, false).unwrap();
    let nd = &report["nondissipative"];
    assert_eq!(nd["status"], "refused");
    assert_eq!(nd["t_max"].as_f64(), Some(0.0));
    assert!(!any_ok);
    let out = cfl(&["estimate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn improved_encoding_divides_g_queries_by_order_cubed() {
    for name in ["pair", "short_time"] {
        let (std_report, _) = cmd_estimate(&bundled(name), false).unwrap();
        let (imp_report, _) = cmd_estimate(&bundled(name), true).unwrap();
        for regime in ["dissipative", "nondissipative"] {
            if std_report[regime]["status"] != "ok" {
                continue;
            }
            let n = std_report[regime]["params"]["n_order"].as_f64().unwrap();
            let a = std_report[regime]["estimate"]["queries_g"].as_f64().unwrap();
            let b = imp_report[regime]["estimate"]["queries_g"].as_f64().unwrap();
            assert!((a / b - n.powi(3)).abs() <= 1e-9 * n.powi(3), "{name}/{regime}");
        }
    }
}

#[test]
fn oracle_dump_has_trajectory_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = cmd_oracle(&bundled("pair"), dir.path()).unwrap();
    let (header, rows) = parse_csv(&std::fs::read_to_string(path).unwrap());
    assert_eq!(header, ["t", "re(x_1)", "im(x_1)", "re(x_2)", "im(x_2)"]);
    assert_eq!(rows.len(), 101);
    assert_eq!(rows[0][0].parse::<f64>().unwrap(), 0.0);
    assert_eq!(rows[100][0].parse::<f64>().unwrap(), 1.0);
    let out = cfl(&[
        "oracle",
        bundled("scalar").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
}
