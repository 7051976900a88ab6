//! One end-to-end run: select parameters, solve the lifted system, compare
//! against the reference integrator and evaluate the bounds.

use std::time::Instant;

use cfl_core::bounds::HypothesisEntry;
use cfl_core::oracle::{measure_eta, measure_eta_total};
use cfl_core::params::DerivationEntry;
use cfl_core::prelude::*;
use serde::Serialize;
use std::result::Result;

use crate::config::{Config, Overrides, RegimeChoice};
use crate::error::{CliError, InModule};

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub select_s: f64,
    pub solve_s: f64,
    pub oracle_s: f64,
    pub reference_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineOutput {
    pub params: ParamSet,
    pub estimate: C64,
    pub exact: C64,
    /// `c . Psi^(N)(T)` from the exact solution of the truncated system.
    pub truncated_value: C64,
    pub reference_method: &'static str,
    pub errors: MeasuredErrors,
    /// `|eta_j(T)|_p` for `j = 1..N`.
    pub eta_measured: Vec<f64>,
    /// `|Psi(T) - Psi^(N)(T)|_p` over all blocks.
    pub eta_total: f64,
    pub eta_bounds: Vec<BoundReport>,
    pub taylor_bound: f64,
    pub budget: ErrorBudget,
    pub resources: Option<ResourceEstimate>,
    pub resources_note: Option<String>,
    pub solve_residual: f64,
    pub timings: Timings,
}

impl PipelineOutput {
    /// Bound on `|eta_1(T)|_p` in the dissipative regime, or on the whole
    /// `|eta(T)|_p` in the short-time regime.
    pub fn first_bound(&self) -> Option<&BoundReport> {
        self.eta_bounds.first()
    }
}

fn secs(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

fn resolve_regime(cfg: &Config, ode: &FourierOde) -> Result<Regime, CliError> {
    Ok(match cfg.run.regime {
        RegimeChoice::Dissipative => Regime::Dissipative,
        RegimeChoice::Nondissipative => Regime::Nondissipative,
        RegimeChoice::Auto => {
            let rep = check_dissipative(ode, cfg.run.p).in_module("bounds")?;
            if rep.mu0 >= 0.0 && rep.r_p < rep.condition_2norm {
                Regime::Dissipative
            } else {
                Regime::Nondissipative
            }
        }
    })
}

fn dissipativity_log(ode: &FourierOde, p: f64) -> Vec<HypothesisEntry> {
    match check_dissipative(ode, p) {
        Ok(rep) => vec![
            HypothesisEntry {
                condition: "mu0 >= 0".into(),
                value: rep.mu0,
                threshold: 0.0,
                holds: rep.mu0 >= 0.0,
            },
            HypothesisEntry {
                condition: "R_p < min{1, |exp(i u0)|_p / |exp(i u0)|_2}".into(),
                value: rep.r_p,
                threshold: rep.condition_2norm,
                holds: rep.r_p < rep.condition_2norm,
            },
        ],
        Err(_) => Vec::new(),
    }
}

pub fn select_params(cfg: &Config, ode: &FourierOde, readout: &ReadoutSpec) -> Result<ParamSet, CliError> {
    let run = &cfg.run;
    match resolve_regime(cfg, ode)? {
        Regime::Dissipative => select_dissipative(ode, readout, run.epsilon, run.horizon, run.p, run.alpha)
            .map_err(|e| {
                let mut err = CliError::core("params", e);
                err.hypothesis_log = dissipativity_log(ode, run.p);
                err
            }),
        Regime::Nondissipative => {
            let (Some(r), Some(nu)) = (run.r, run.nu) else {
                return Err(CliError::config("the short-time regime needs run.r and run.nu"));
            };
            select_nondissipative(ode, readout, run.epsilon, run.horizon, run.p, run.alpha, r, nu)
                .in_module("params")
        }
    }
}

fn apply_overrides(ps: &mut ParamSet, o: &Overrides, ode: &FourierOde) {
    let mut note = |name: &str, value: f64| {
        ps.derivation_log.push(DerivationEntry {
            name: format!("override:{name}"),
            formula: "user override".into(),
            value,
        })
    };
    if let Some(n) = o.n_order {
        note("N", n as f64);
    }
    if let Some(k) = o.k {
        note("k", k as f64);
    }
    if let Some(m) = o.m {
        note("m", m as f64);
    }
    let nu = o.nu.filter(|_| ps.regime == Regime::Dissipative);
    if let Some(nu) = nu {
        note("nu", nu);
    }
    if let Some(n) = o.n_order {
        ps.n_order = n;
    }
    if let Some(k) = o.k {
        ps.k = k;
    }
    if let Some(m) = o.m {
        ps.m = m;
        ps.h = ps.horizon / m.max(1) as f64;
    }
    if let Some(nu) = nu {
        ps.nu = nu;
        ps.gamma = ode.initial_phase().norm() / nu;
    }
}

pub fn run_pipeline(cfg: &Config, extra: &Overrides, mode: EncodingMode) -> Result<PipelineOutput, CliError> {
    let run = &cfg.run;
    let ode = cfg.ode()?;
    let readout = cfg.readout()?;
    let overrides = cfg.overrides.merged(extra);

    let clock = Instant::now();
    let mut params = select_params(cfg, &ode, &readout)?;
    apply_overrides(&mut params, &overrides, &ode);
    let mut timings = Timings {
        select_s: secs(clock),
        ..Timings::default()
    };
    let order = params.n_order;
    let p = params.p;

    let clock = Instant::now();
    let rescaled = rescale(&ode, &readout, params.nu).in_module("problem")?;
    let op = LinearOperatorLN::new(&rescaled, order).in_module("linearize")?;
    let psi0 = lift_initial(&rescaled, order).in_module("linearize")?;
    let coeffs = expand_coeff_vector(&readout, &rescaled, order).in_module("problem")?;
    let taylor_cfg = TaylorConfig::new(params.m, params.h, params.k).in_module("taylor_solver")?;
    let solved = forward_solve(&op, &taylor_cfg, &psi0).in_module("taylor_solver")?;
    let estimate = readout_value(&solved, &coeffs).in_module("taylor_solver")?;
    timings.solve_s = secs(clock);

    let clock = Instant::now();
    let field = FourierField::from_rescaled(&rescaled);
    let traj = integrate(&field, rescaled.x0.as_slice(), run.horizon, run.oracle_tol).in_module("oracle")?;
    let exact = rescaled.eval(traj.final_state()).in_module("oracle")?;
    timings.oracle_s = secs(clock);

    let clock = Instant::now();
    let (truncated, method) = linear_reference(&op, &psi0, run.horizon).in_module("oracle")?;
    let truncated_value = coeffs.dot(&truncated);
    let eta_measured = (1..=order)
        .map(|j| measure_eta(&traj, &truncated, j, run.horizon, p))
        .collect::<cfl_core::Result<Vec<_>>>()
        .in_module("oracle")?;
    let eta_total = measure_eta_total(&traj, &truncated, run.horizon, p).in_module("oracle")?;
    timings.reference_s = secs(clock);

    let errors = MeasuredErrors {
        koopman: (exact - truncated_value).norm(),
        taylor: (truncated_value - estimate).norm(),
        total: (exact - estimate).norm(),
    };

    let eta_bounds = match params.regime {
        Regime::Dissipative => {
            let report = check_dissipative(&ode, p).in_module("bounds")?;
            (1..=order)
                .map(|k| eta_bound_dissipative(&report, &rescaled, order, k, p))
                .collect::<cfl_core::Result<Vec<_>>>()
                .in_module("bounds")?
        }
        Regime::Nondissipative => {
            let r = params.r.unwrap_or(std::f64::consts::E);
            vec![eta_bound_finite_time(&rescaled, order, r, run.horizon, p).in_module("bounds")?]
        }
    };
    let taylor_bound = taylor_truncation_bound(params.m, params.k, params.c_of_l, psi0.norm_p(2.0));
    let budget = end_to_end_error_budget(&params, &errors);
    let (resources, resources_note) = match query_counts(&params, mode) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };

    Ok(PipelineOutput {
        params,
        estimate,
        exact,
        truncated_value,
        reference_method: method.label(),
        errors,
        eta_measured,
        eta_total,
        eta_bounds,
        taylor_bound,
        budget,
        resources,
        resources_note,
        solve_residual: solved.residual,
        timings,
    })
}
