//! Parameter recipes for the dissipative and the short-time regimes.
//!
//! Every selected value is logged with the formula that produced it, so a
//! manifest can be audited line by line.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::bounds::{check_dissipative, t_max_nondissipative};
use crate::norms::{dual_exponent, gamma_growth_bound, op_norm, row_q_norm, vector_p_norm, NormKind};
use crate::problem::{rescale, FourierOde, ReadoutSpec};
use crate::{Error, Result};

/// Largest Taylor degree a recipe may return before the selection is refused.
pub const DEFAULT_K_CAP: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Dissipative,
    Nondissipative,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Dissipative => "dissipative",
            Regime::Nondissipative => "nondissipative",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivationEntry {
    pub name: String,
    pub formula: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub regime: Regime,
    pub p: f64,
    pub epsilon: f64,
    pub horizon: f64,
    /// Upper bound on `max_j |(G0)_j|`.
    pub alpha: f64,
    /// Block-encoding factor of `G1`, taken as its spectral norm.
    pub beta: f64,
    pub nu: f64,
    pub n_order: usize,
    pub k: usize,
    pub m: usize,
    pub h: f64,
    pub sigma: f64,
    pub tau: f64,
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    pub s: f64,
    /// Readout amplitude factor: `z` when dissipative, `q~` otherwise.
    pub z: f64,
    /// Growth constant `C(L)` fed to the encoding formulas (1 or `Gamma`).
    pub c_of_l: f64,
    pub mu0: f64,
    pub g1_row_q: f64,
    pub degree: usize,
    pub d_norm_q: f64,
    pub d_norm_2: f64,
    /// `|exp(i u0)|_2 / nu`.
    pub gamma: f64,
    pub r_p: Option<f64>,
    pub gamma_growth: Option<f64>,
    pub r: Option<f64>,
    pub ell: Option<f64>,
    pub t_max: Option<f64>,
    pub power_of_two: bool,
    pub derivation_log: Vec<DerivationEntry>,
}

impl ParamSet {
    pub fn logged(&self, name: &str) -> Option<f64> {
        self.derivation_log
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.value)
    }

    /// Upper bound on `|L| h` from the block norm bound `N(|F0|_inf + |F1|_row,q)`.
    pub fn ln_norm_times_h(&self) -> f64 {
        self.n_order as f64 * (self.alpha + self.nu * self.g1_row_q) * self.h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectOptions {
    /// Round `m` up to a power of two, as a register-indexed layout would.
    pub power_of_two: bool,
    pub k_cap: usize,
    /// Cross-check values for `mu0` and `R_p` supplied with the problem.
    pub expected_mu0: Option<f64>,
    pub expected_r_p: Option<f64>,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            power_of_two: false,
            k_cap: DEFAULT_K_CAP,
            expected_mu0: None,
            expected_r_p: None,
        }
    }
}

struct Log(Vec<DerivationEntry>);

impl Log {
    fn put(&mut self, name: &str, formula: &str, value: f64) -> f64 {
        self.0.push(DerivationEntry {
            name: name.to_string(),
            formula: formula.to_string(),
            value,
        });
        value
    }
}

fn check_epsilon_horizon(epsilon: f64, horizon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!(
            "horizon T must be positive, got {horizon}"
        )));
    }
    Ok(())
}

fn resolve_alpha(ode: &FourierOde, alpha: Option<f64>) -> Result<f64> {
    let floor = ode.g0_max();
    match alpha {
        None => Ok(floor),
        Some(a) if a >= floor && a.is_finite() => Ok(a),
        Some(a) => Err(Error::invalid(format!(
            "alpha = {a} is below max_j |(G0)_j| = {floor}"
        ))),
    }
}

fn cross_check(name: &str, computed: f64, expected: Option<f64>) -> Result<()> {
    if let Some(e) = expected {
        if (computed - e).abs() > 1e-9 * computed.abs().max(1.0) {
            return Err(Error::invalid(format!(
                "given {name} = {e} disagrees with the recomputed value {computed}"
            )));
        }
    }
    Ok(())
}

/// `m` from its ceiling formula, at least one step, optionally a power of two.
fn step_count(log: &mut Log, raw: f64, formula: &str, power_of_two: bool) -> usize {
    let mut m = (raw.ceil() as usize).max(1);
    log.put("m", formula, m as f64);
    if power_of_two {
        m = m.next_power_of_two();
        log.put("m_power_of_two", "m rounded up to a power of two", m as f64);
    }
    m
}

/// Truncation order from a ceiling, clamped to at least `max(1, K)` so every
/// readout coefficient has a block to land in.
fn clamp_order(log: &mut Log, raw: f64, degree: usize) -> usize {
    let ceiling = if raw.is_finite() {
        raw.ceil().max(0.0) as usize
    } else {
        0
    };
    let floor = degree.max(1);
    if ceiling < floor {
        log.put("N_clamped", "N raised to max(1, K)", floor as f64);
        floor
    } else {
        ceiling
    }
}

fn taylor_degree(log: &mut Log, accuracy_arg: f64, m: usize, k_cap: usize) -> Result<usize> {
    let first = accuracy_arg.log2().ceil();
    let second = (m as f64 * E * E).log2().ceil();
    let raw = first.max(second);
    log.put("k_accuracy_branch", "ceil(log2(4 e^3 s |d| m X / eps))", first);
    log.put("k_step_branch", "ceil(log2(m e^2))", second);
    if raw > k_cap as f64 {
        return Err(Error::invalid(format!(
            "Taylor degree k = {raw} exceeds the cap {k_cap}; loosen epsilon"
        )));
    }
    let k = (raw.max(1.0)) as usize;
    if raw < 1.0 {
        log.put("k_clamped", "k raised to 1", 1.0);
    }
    log.put("k", "max of the two branches", k as f64);
    Ok(k)
}

struct Encoding {
    sigma: f64,
    tau: f64,
    c1: f64,
    c2: f64,
    delta: f64,
}

/// `sigma, tau, c1, c2, delta` given the regime-specific `c1`, the growth
/// constant `C` and the readout amplitude divisor.
fn encoding_params(log: &mut Log, c1: f64, c_of_l: f64, m: usize, k: usize, delta: f64) -> Encoding {
    let mf = m as f64;
    let root = (k as f64 + 1.0).sqrt();
    let c1 = log.put("c1", "eps sqrt(m) / (4 |d| s) * X", c1);
    let c2 = log.put(
        "c2",
        "8 e^4 m^2 sqrt(k+1) C^2",
        8.0 * E.powi(4) * mf * mf * root * c_of_l * c_of_l,
    );
    let tau = log.put(
        "tau",
        "min{c1 / (1 + c2), 1 / (4 e^2 m sqrt(k+1) C)}",
        (c1 / (1.0 + c2)).min(1.0 / (4.0 * E * E * mf * root * c_of_l)),
    );
    let sigma = log.put("sigma", "c1 - c2 tau", c1 - c2 * tau);
    let delta = log.put("delta", "eps / (sqrt(m) |d| s) * X", delta);
    Encoding {
        sigma,
        tau,
        c1,
        c2,
        delta,
    }
}

pub fn select_dissipative(
    ode: &FourierOde,
    readout: &ReadoutSpec,
    epsilon: f64,
    horizon: f64,
    p: f64,
    alpha: Option<f64>,
) -> Result<ParamSet> {
    select_dissipative_with(
        ode,
        readout,
        epsilon,
        horizon,
        p,
        alpha,
        &SelectOptions::default(),
    )
}

pub fn select_dissipative_with(
    ode: &FourierOde,
    readout: &ReadoutSpec,
    epsilon: f64,
    horizon: f64,
    p: f64,
    alpha: Option<f64>,
    opts: &SelectOptions,
) -> Result<ParamSet> {
    check_epsilon_horizon(epsilon, horizon)?;
    let kind = NormKind::new(p)?;
    let alpha = resolve_alpha(ode, alpha)?;
    let report = check_dissipative(ode, p)?;
    cross_check("mu0", report.mu0, opts.expected_mu0)?;
    cross_check("R_p", report.r_p, opts.expected_r_p)?;
    if !(report.mu0 >= 0.0 && report.r_p < report.condition_2norm) {
        return Err(Error::hypothesis(format!(
            "not dissipative: mu0 = {}, R_p = {} (needs R_p < {})",
            report.mu0, report.r_p, report.condition_2norm
        )));
    }
    let q = kind.dual();
    let g1_row_q = row_q_norm(&ode.g1, q)?;
    let phase = ode.initial_phase();
    let phase_p = vector_p_norm(phase.as_slice(), p)?;
    let phase_2 = phase.norm();
    let k_deg = readout.degree;
    let d_q = readout.d_norm(q);
    let d_2 = readout.d_norm(2.0);
    let mut log = Log(Vec::new());
    log.put("mu0", "min_j Im (G0)_j", report.mu0);
    log.put("R_p", "|G1|_row,q |exp(i u0)|_p / mu0", report.r_p);

    // Without coupling R_p = 0 and nu = mu0 / |G1| is undefined; the lifted
    // system is then block diagonal and N = K is exact.
    let decoupled = g1_row_q == 0.0;
    let (nu, ratio) = if decoupled {
        let nu = log.put("nu", "2 |exp(i u0)|_2 (decoupled)", 2.0 * phase_2);
        (nu, phase_2 / nu)
    } else {
        let nu = log.put("nu", "|exp(i u0)|_p / R_p", phase_p / report.r_p);
        (nu, report.r_p)
    };
    // R / sqrt(1 - R^2) bounds |Psi(0)|_2 once gamma <= R.
    let amplitude = ratio / (1.0 - ratio * ratio).sqrt();
    let s = log.put("s", "max{nu, nu^K}", nu.max(nu.powi(k_deg as i32)));

    let n_order = if decoupled {
        log.put("N", "K (decoupled)", k_deg as f64);
        k_deg
    } else {
        let raw = log.put(
            "N_raw",
            "log(4 K s |d|_q / eps) / log(1 / R_p)",
            (4.0 * k_deg as f64 * s * d_q / epsilon).ln() / (1.0 / report.r_p).ln(),
        );
        let n = clamp_order(&mut log, raw, k_deg);
        log.put("N", "ceil(N_raw), at least max(1, K)", n as f64);
        n
    };
    let coupling = nu * g1_row_q;
    let m = step_count(
        &mut log,
        horizon * n_order as f64 * (alpha + coupling),
        "ceil(T N (alpha + mu0))",
        opts.power_of_two,
    );
    let h = log.put("h", "T / m", horizon / m as f64);
    let k = taylor_degree(
        &mut log,
        4.0 * E.powi(3) / epsilon * s * d_2 * m as f64 * amplitude,
        m,
        opts.k_cap,
    )?;
    let mf = m as f64;
    let enc = encoding_params(
        &mut log,
        epsilon * mf.sqrt() / (4.0 * d_2 * s) / amplitude,
        1.0,
        m,
        k,
        epsilon / (mf.sqrt() * d_2 * s) / amplitude,
    );
    let z = log.put(
        "z",
        "|d| s sqrt(alpha) R_p / sqrt(1 - R_p^2)",
        d_2 * s * alpha.sqrt() * amplitude,
    );
    log.put("C(L)", "1 (certified stable)", 1.0);
    log.put(
        "|L| h",
        "N (alpha + nu |G1|_row,q) h",
        n_order as f64 * (alpha + coupling) * h,
    );

    Ok(ParamSet {
        regime: Regime::Dissipative,
        p,
        epsilon,
        horizon,
        alpha,
        beta: op_norm(&ode.g1, 2.0)?,
        nu,
        n_order,
        k,
        m,
        h,
        sigma: enc.sigma,
        tau: enc.tau,
        delta: enc.delta,
        c1: enc.c1,
        c2: enc.c2,
        s,
        z,
        c_of_l: 1.0,
        mu0: report.mu0,
        g1_row_q,
        degree: k_deg,
        d_norm_q: d_q,
        d_norm_2: d_2,
        gamma: phase_2 / nu,
        r_p: Some(report.r_p),
        gamma_growth: None,
        r: None,
        ell: None,
        t_max: None,
        power_of_two: opts.power_of_two,
        derivation_log: log.0,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn select_nondissipative(
    ode: &FourierOde,
    readout: &ReadoutSpec,
    epsilon: f64,
    horizon: f64,
    p: f64,
    alpha: Option<f64>,
    r: f64,
    nu: f64,
) -> Result<ParamSet> {
    select_nondissipative_with(
        ode,
        readout,
        epsilon,
        horizon,
        p,
        alpha,
        r,
        nu,
        &SelectOptions::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn select_nondissipative_with(
    ode: &FourierOde,
    readout: &ReadoutSpec,
    epsilon: f64,
    horizon: f64,
    p: f64,
    alpha: Option<f64>,
    r: f64,
    nu: f64,
    opts: &SelectOptions,
) -> Result<ParamSet> {
    check_epsilon_horizon(epsilon, horizon)?;
    NormKind::new(p)?;
    let alpha = resolve_alpha(ode, alpha)?;
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha must be positive in the short-time regime"));
    }
    let q = dual_exponent(p);
    let phase = ode.initial_phase();
    let phase_p = vector_p_norm(phase.as_slice(), p)?;
    let phase_2 = phase.norm();
    let nu_floor = (r * phase_p).max(2f64.sqrt() * phase_2);
    if !(nu > nu_floor) || !nu.is_finite() {
        return Err(Error::hypothesis(format!(
            "nu = {nu} must exceed max{{r |exp(i u0)|_p, sqrt(2) |exp(i u0)|_2}} = {nu_floor}"
        )));
    }
    let rescaled = rescale(ode, readout, nu)?;
    let t_max = t_max_nondissipative(&rescaled, r, p, alpha)?;
    if horizon > t_max {
        return Err(Error::hypothesis(format!(
            "T = {horizon} exceeds T~max = {t_max}"
        )));
    }
    let mu0 = ode.mu0();
    let g1_row_q = row_q_norm(&ode.g1, q)?;
    let g1_row_2 = row_q_norm(&ode.g1, 2.0)?;
    let k_deg = readout.degree;
    let d_q = readout.d_norm(q);
    let d_2 = readout.d_norm(2.0);
    let coupling = nu * g1_row_q;
    let mut log = Log(Vec::new());
    log.put("nu", "given", nu);
    log.put("r", "given", r);
    let ell = log.put("ell", "ln(nu / (r |exp(i u0)|_p))", (nu / (r * phase_p)).ln());
    log.put("T_max", "min of the two horizon branches", t_max);
    let s = log.put("s", "max{nu, nu^K}", nu.max(nu.powi(k_deg as i32)));

    let numerator = (4.0 * k_deg as f64 * s * d_q / (r * epsilon)).max(1.0).ln();
    let denominator = r.ln() - (alpha + coupling) * horizon;
    let raw = log.put(
        "N_raw",
        "log(max(4 K s |d|_q / (r eps), 1)) / log(r / exp((alpha + nu |G1|_row,q) T))",
        numerator / denominator,
    );
    let n_order = clamp_order(&mut log, raw, k_deg);
    log.put("N", "ceil(N_raw), at least max(1, K)", n_order as f64);
    let m = step_count(
        &mut log,
        horizon * n_order as f64 * (alpha + coupling),
        "ceil(T N (alpha + nu |G1|_row,q))",
        opts.power_of_two,
    );
    let h = log.put("h", "T / m", horizon / m as f64);
    let gamma_growth = log.put(
        "Gamma",
        "exp(T (N nu |G1|_row,2 + max{-mu0, -N mu0}))",
        gamma_growth_bound(n_order, horizon, nu, g1_row_2, mu0),
    );
    let k = taylor_degree(
        &mut log,
        4.0 * E.powi(3) / epsilon * s * d_2 * m as f64 * gamma_growth,
        m,
        opts.k_cap,
    )?;
    let mf = m as f64;
    let enc = encoding_params(
        &mut log,
        epsilon * mf.sqrt() / (4.0 * d_2 * s),
        gamma_growth,
        m,
        k,
        epsilon / (mf.sqrt() * d_2 * s * gamma_growth),
    );
    let z = log.put(
        "q~",
        "s |d| Gamma sqrt(alpha + nu |G1|_row,q)",
        s * d_2 * gamma_growth * (alpha + coupling).sqrt(),
    );
    log.put(
        "|L| h",
        "N (alpha + nu |G1|_row,q) h",
        n_order as f64 * (alpha + coupling) * h,
    );

    Ok(ParamSet {
        regime: Regime::Nondissipative,
        p,
        epsilon,
        horizon,
        alpha,
        beta: op_norm(&ode.g1, 2.0)?,
        nu,
        n_order,
        k,
        m,
        h,
        sigma: enc.sigma,
        tau: enc.tau,
        delta: enc.delta,
        c1: enc.c1,
        c2: enc.c2,
        s,
        z,
        c_of_l: gamma_growth,
        mu0,
        g1_row_q,
        degree: k_deg,
        d_norm_q: d_q,
        d_norm_2: d_2,
        gamma: phase_2 / nu,
        r_p: None,
        gamma_growth: Some(gamma_growth),
        r: Some(r),
        ell: Some(ell),
        t_max: Some(t_max),
        power_of_two: opts.power_of_two,
        derivation_log: log.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredErrors {
    /// `|f(x(T)) - c . Psi^(N)(T)|`.
    pub koopman: f64,
    /// `|c . Psi^(N)(T) - c . Phi_m|`.
    pub taylor: f64,
    /// `|f(x(T)) - c . Phi_m|`.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLine {
    pub component: String,
    pub budget: f64,
    /// `None` for the components with no classical counterpart.
    pub measured: Option<f64>,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub epsilon: f64,
    pub lines: Vec<BudgetLine>,
    pub total_measured: f64,
    pub all_within: bool,
}

/// Splits `epsilon` into four equal lines and checks the two measured ones.
pub fn end_to_end_error_budget(params: &ParamSet, measured: &MeasuredErrors) -> ErrorBudget {
    let quarter = params.epsilon / 4.0;
    let line = |component: &str, measured: Option<f64>| BudgetLine {
        component: component.to_string(),
        budget: quarter,
        measured,
        within: measured.map_or(true, |v| v <= quarter),
    };
    let lines = vec![
        line("koopman_truncation", Some(measured.koopman)),
        line("taylor_truncation", Some(measured.taylor)),
        line("block_encoding", None),
        line("expectation_estimation", None),
    ];
    let all_within = lines.iter().all(|l| l.within);
    ErrorBudget {
        epsilon: params.epsilon,
        lines,
        total_measured: measured.total,
        all_within,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::eta_bound_dissipative;
    use crate::problem::rescale;
    use crate::C64;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn scalar(g0: C64, g1: C64, u0: C64) -> FourierOde {
        FourierOde::new(
            DVector::from_element(1, g0),
            DMatrix::from_element(1, 1, g1),
            DVector::from_element(1, u0),
        )
        .unwrap()
    }

    fn readout(entries: Vec<(Vec<usize>, C64)>, degree: usize) -> ReadoutSpec {
        ReadoutSpec::new(degree, entries).unwrap()
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).fold(1.0, |a, i| a * i as f64)
    }

    #[test]
    fn dissipative_order_example() {
        // mu0 = 1, |G1| = 1/2, u0 = 0: R_p = 1/2, nu = 2, s = 2, |d| chosen so
        // that s |d|_q / eps = 1.
        let ode = scalar(c(0.0, 1.0), c(0.5, 0.0), c(0.0, 0.0));
        let eps = 1e-3;
        let ro = readout(vec![(vec![1], c(eps / 2.0, 0.0))], 1);
        let ps = select_dissipative(&ode, &ro, eps, 1.0, 2.0, None).unwrap();
        assert_eq!(ps.r_p, Some(0.5));
        assert_eq!(ps.nu, 2.0);
        assert_eq!(ps.s, 2.0);
        assert_eq!(ps.n_order, 2);
    }

    #[test]
    fn dissipative_step_count_example() {
        // T = 1, N = 2, alpha = 1, mu0 = 1 gives m = 4.
        let ode = scalar(c(0.0, 1.0), c(0.5, 0.0), c(0.0, 0.0));
        let eps = 1e-3;
        let ro = readout(vec![(vec![1], c(eps / 2.0, 0.0))], 1);
        let ps = select_dissipative(&ode, &ro, eps, 1.0, 2.0, Some(1.0)).unwrap();
        assert_eq!(ps.m, 4);
        assert_eq!(ps.h, 0.25);
        let pow2 = select_dissipative_with(
            &ode,
            &ro,
            eps,
            1.3,
            2.0,
            Some(1.0),
            &SelectOptions {
                power_of_two: true,
                ..SelectOptions::default()
            },
        )
        .unwrap();
        assert_eq!(pow2.m, 8);
        assert!(pow2.power_of_two);
    }

    #[test]
    fn dissipative_s_with_linear_readout() {
        let ode = scalar(c(0.2, 1.5), c(0.3, 0.4), c(0.1, 0.2));
        let ro = readout(vec![(vec![1], c(1.0, 0.0))], 1);
        let ps = select_dissipative(&ode, &ro, 1e-3, 1.0, 2.0, None).unwrap();
        assert!((ps.s - 1.5 / 0.5).abs() < 1e-14);
        assert!((ps.nu - ps.s).abs() < 1e-14);
    }

    #[test]
    fn dissipative_rejections() {
        let ro = readout(vec![(vec![1], c(1.0, 0.0))], 1);
        let bad = scalar(c(0.2, 0.1), c(0.3, 0.4), c(0.0, 0.0));
        assert!(matches!(
            select_dissipative(&bad, &ro, 1e-3, 1.0, 2.0, None),
            Err(Error::Hypothesis(_))
        ));
        let ok = scalar(c(0.2, 2.0), c(0.3, 0.4), c(0.0, 0.0));
        assert!(select_dissipative(&ok, &ro, 0.0, 1.0, 2.0, None).is_err());
        assert!(select_dissipative(&ok, &ro, 1e-3, 1.0, 2.0, Some(0.1)).is_err());
        let capped = SelectOptions {
            k_cap: 3,
            ..SelectOptions::default()
        };
        assert!(matches!(
            select_dissipative_with(&ok, &ro, 1e-12, 1.0, 2.0, None, &capped),
            Err(Error::InvalidInput(_))
        ));
        let wrong = SelectOptions {
            expected_mu0: Some(1.9),
            ..SelectOptions::default()
        };
        assert!(select_dissipative_with(&ok, &ro, 1e-3, 1.0, 2.0, None, &wrong).is_err());
        let right = SelectOptions {
            expected_mu0: Some(2.0),
            expected_r_p: Some(0.25),
            ..SelectOptions::default()
        };
        assert!(select_dissipative_with(&ok, &ro, 1e-3, 1.0, 2.0, None, &right).is_ok());
    }

    #[test]
    fn decoupled_problem_uses_readout_degree() {
        let ode = scalar(c(0.2, 1.0), c(0.0, 0.0), c(0.3, 0.1));
        let ro = readout(vec![(vec![2], c(1.0, 0.0))], 2);
        let ps = select_dissipative(&ode, &ro, 1e-3, 1.0, 2.0, None).unwrap();
        assert_eq!(ps.n_order, 2);
        assert!((ps.gamma - 0.5).abs() < 1e-15);
        assert!(ps.sigma > 0.0 && ps.sigma.is_finite());
    }

    #[test]
    fn nondissipative_examples() {
        let ode = scalar(c(0.7, -0.2), c(0.3, 0.1), c(0.2, 0.0));
        let ro = readout(vec![(vec![1], c(1.0, 0.0))], 1);
        let phase = ode.initial_phase().norm();

        let ps = select_nondissipative(&ode, &ro, 1e-3, 0.01, 2.0, None, 1.2, phase * 5.0);
        assert!(ps.is_err(), "r below e");
        let ps = select_nondissipative(&ode, &ro, 1e-3, 0.01, 2.0, None, E, phase * 5.0);
        assert!(ps.is_err(), "r = e leaves no admissible horizon");

        let nu = 6.0 * phase;
        let ps = select_nondissipative(&ode, &ro, 1e-3, 0.01, 2.0, None, 5.0, nu).unwrap();
        assert!(ps.gamma < 1.0 / 2f64.sqrt());
        assert!(ps.t_max.unwrap() >= 0.01);
        assert!(select_nondissipative(&ode, &ro, 1e-3, 10.0, 2.0, None, 5.0, nu).is_err());
        assert!(select_nondissipative(&ode, &ro, 1e-3, 0.01, 2.0, None, 5.0, 4.0 * phase).is_err());
    }

    #[test]
    fn sqrt2_floor_binds_for_wide_states() {
        // With 16 equal phases and p = inf, sqrt(2) |w|_2 exceeds r |w|_inf for r = 5.
        let n = 16;
        let ode = FourierOde::new(
            DVector::from_element(n, c(0.1, 0.0)),
            DMatrix::from_element(n, n, c(0.001, 0.0)),
            DVector::from_element(n, c(0.0, 2.0)),
        )
        .unwrap();
        let mut e = vec![0; n];
        e[0] = 1;
        let ro = readout(vec![(e, c(1.0, 0.0))], 1);
        let phase = ode.initial_phase().norm();
        let nu = 2f64.sqrt() * phase * (1.0 + 1e-6);
        let ps = select_nondissipative(&ode, &ro, 1e-3, 0.01, f64::INFINITY, None, 5.0, nu).unwrap();
        assert!(ps.gamma < 1.0 / 2f64.sqrt());
    }

    #[test]
    fn nondissipative_loose_epsilon_clamps_order() {
        let ode = scalar(c(0.7, -0.2), c(0.3, 0.1), c(0.2, 0.0));
        let ro = readout(vec![(vec![1], c(1e-3, 0.0))], 1);
        let nu = 6.0 * ode.initial_phase().norm();
        let ps = select_nondissipative(&ode, &ro, 1.0, 0.01, 2.0, None, 5.0, nu).unwrap();
        assert_eq!(ps.n_order, 1);
        assert_eq!(ps.logged("N_raw"), Some(0.0));
        assert_eq!(ps.logged("N_clamped"), Some(1.0));
    }

    #[test]
    fn nondissipative_s_is_max_of_powers() {
        let g0 = DVector::from_vec(vec![c(0.1, 0.0); 3]);
        let g1 = DMatrix::from_element(3, 3, c(0.01, 0.0));
        let u0 = DVector::from_vec(vec![c(0.0, 3.0); 3]);
        let ode = FourierOde::new(g0, g1, u0).unwrap();
        let ro = readout(vec![(vec![1, 1, 1], c(1.0, 0.0))], 3);
        let ps = select_nondissipative(&ode, &ro, 1e-2, 0.01, 2.0, None, 5.0, 2.0).unwrap();
        assert_eq!(ps.s, 8.0);
    }

    #[test]
    fn budget_lines() {
        let ode = scalar(c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0));
        let ro = readout(vec![(vec![1], c(1.0, 0.0))], 1);
        let ps = select_dissipative(&ode, &ro, 1e-3, 1.0, 2.0, None).unwrap();
        let b = end_to_end_error_budget(
            &ps,
            &MeasuredErrors {
                koopman: 0.0,
                taylor: 1e-6,
                total: 1e-6,
            },
        );
        assert_eq!(b.lines.len(), 4);
        assert!((b.lines.iter().map(|l| l.budget).sum::<f64>() - 1e-3).abs() < 1e-18);
        assert!(b.all_within);
        let b = end_to_end_error_budget(
            &ps,
            &MeasuredErrors {
                koopman: 0.0,
                taylor: 1e-3,
                total: 1e-3,
            },
        );
        assert!(!b.all_within);
    }

    fn dissipative_instance() -> impl Strategy<Value = (FourierOde, ReadoutSpec, f64, f64, f64)> {
        (
            1usize..=3,
            1usize..=2,
            any::<u64>(),
            -4.0f64..-1.0,
            0.2f64..3.0,
            prop_oneof![Just(1.0), Just(2.0)],
        )
            .prop_map(|(n, degree, seed, log_eps, horizon, p)| {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let g0 = DVector::from_fn(n, |_, _| {
                    c(rng.random_range(-1.0..1.0), rng.random_range(0.5..2.0))
                });
                let mut g1 = DMatrix::from_fn(n, n, |_, _| {
                    c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                });
                let u0 = DVector::from_fn(n, |_, _| {
                    c(rng.random_range(-3.0..3.0), rng.random_range(0.3..1.5))
                });
                let ode0 = FourierOde::new(g0.clone(), g1.clone(), u0.clone()).unwrap();
                let rep = check_dissipative(&ode0, p).unwrap();
                let target = rng.random_range(0.05..0.6) * rep.condition_2norm;
                g1 *= C64::from(target / rep.r_p);
                let ode = FourierOde::new(g0, g1, u0).unwrap();
                let mut e = vec![0; n];
                e[0] = degree;
                let ro = ReadoutSpec::new(degree, vec![(e, c(1.0, 0.5))]).unwrap();
                (ode, ro, 10f64.powf(log_eps), horizon, p)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn dissipative_invariants((ode, ro, eps, horizon, p) in dissipative_instance()) {
            let ps = select_dissipative(&ode, &ro, eps, horizon, p, None).unwrap();
            let r_p = ps.r_p.unwrap();
            // Defining inequality of N.
            let rescaled = rescale(&ode, &ro, ps.nu).unwrap();
            let rep = check_dissipative(&ode, p).unwrap();
            let eta = eta_bound_dissipative(&rep, &rescaled, ps.n_order, 1, p).unwrap();
            prop_assert!(eta.hypotheses_met);
            prop_assert!(eta.value * ro.degree as f64 * ps.s * ps.d_norm_q <= eps / 4.0 * (1.0 + 1e-12));
            // Both branches of k.
            let kf = factorial(ps.k + 1);
            let amp = r_p / (1.0 - r_p * r_p).sqrt();
            prop_assert!(kf >= 4.0 * E.powi(3) / eps * ps.s * ps.d_norm_2 * ps.m as f64 * amp);
            prop_assert!(ps.m as f64 <= kf / (E * E));
            // Encoding preconditions.
            prop_assert!(ps.sigma > 0.0);
            prop_assert!(ps.tau <= 1.0 / (4.0 * E * E * ps.m as f64 * ((ps.k + 1) as f64).sqrt()) * (1.0 + 1e-12));
            prop_assert!(ps.ln_norm_times_h() <= 1.0 + 1e-12);
            prop_assert!(ps.n_order >= ro.degree);
        }

        #[test]
        fn nondissipative_invariants(
            seed in any::<u64>(),
            n in 1usize..=2,
            frac in 0.05f64..0.95,
            log_eps in -4.0f64..-1.0,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g0 = DVector::from_fn(n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let g1 = DMatrix::from_fn(n, n, |_, _| c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)));
            let u0 = DVector::from_fn(n, |_, _| c(rng.random_range(-3.0..3.0), rng.random_range(0.0..1.0)));
            let ode = FourierOde::new(g0, g1, u0).unwrap();
            let mut e = vec![0; n];
            e[n - 1] = 1;
            let ro = ReadoutSpec::new(1, vec![(e, c(0.5, 0.0))]).unwrap();
            let phase = ode.initial_phase();
            let nu = 3.0 * (5.0 * vector_p_norm(phase.as_slice(), 2.0).unwrap());
            let rescaled = rescale(&ode, &ro, nu).unwrap();
            let alpha = ode.g0_max().max(0.1);
            let t_max = t_max_nondissipative(&rescaled, 5.0, 2.0, alpha).unwrap();
            prop_assume!(t_max > 0.0);
            let eps = 10f64.powf(log_eps);
            let ps = select_nondissipative(&ode, &ro, eps, frac * t_max, 2.0, Some(alpha), 5.0, nu).unwrap();
            let gamma = ps.gamma_growth.unwrap();
            let kf = factorial(ps.k + 1);
            prop_assert!(kf >= 4.0 * E.powi(3) / eps * ps.s * ps.d_norm_2 * ps.m as f64 * gamma);
            prop_assert!(ps.sigma > 0.0);
            prop_assert!(ps.tau <= 1.0 / (4.0 * E * E * ps.m as f64 * ((ps.k + 1) as f64).sqrt() * gamma) * (1.0 + 1e-12));
            prop_assert!(ps.ln_norm_times_h() <= 1.0 + 1e-12);
            // Koopman inequality behind N.
            let base = 5.0 / ((alpha + nu * ps.g1_row_q) * ps.horizon).exp();
            prop_assert!(base >= E * (1.0 - 1e-12));
            prop_assert!(base.powi(ps.n_order as i32) >= 4.0 * ps.s * ps.d_norm_q / (5.0 * eps) * (1.0 - 1e-12));
        }

        #[test]
        fn order_grows_as_epsilon_shrinks((ode, ro, eps, horizon, p) in dissipative_instance()) {
            let a = select_dissipative(&ode, &ro, eps, horizon, p, None).unwrap();
            let b = select_dissipative(&ode, &ro, eps / 10.0, horizon, p, None).unwrap();
            prop_assert!(b.n_order >= a.n_order);
            prop_assert!(b.k >= a.k);
        }
    }
}
