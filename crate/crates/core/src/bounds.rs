//! Numeric evaluation of the truncation, Taylor and stability bounds.
//!
//! Every evaluator returns a [`BoundReport`] carrying the checked hypotheses,
//! so a caller can see why a bound does or does not apply.

use std::f64::consts::E;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linearize::{dense_ln, LinearOperatorLN};
use crate::norms::{dual_exponent, log_norm_2, row_q_norm, vector_p_norm, NormKind};
use crate::problem::{FourierOde, RescaledProblem};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipativityReport {
    /// `min_j Im (G0)_j`.
    pub mu0: f64,
    /// `|G1|_row,q |exp(i u0)|_p / mu0`; infinite when `mu0 <= 0` and `G1 != 0`.
    pub r_p: f64,
    pub p: f64,
    pub q: f64,
    /// `min{1, |exp(i u0)|_p / |exp(i u0)|_2}`.
    pub condition_2norm: f64,
    /// `mu0 > 0` and `r_p < condition_2norm`.
    pub dissipative: bool,
    /// `mu0 = 0` with a nonzero coupling.
    pub degenerate: bool,
}

impl DissipativityReport {
    /// Whether the weaker norm-monotonicity hypothesis (`mu0 > 0`, `R_p < 1`) holds.
    pub fn monotone(&self) -> bool {
        self.mu0 > 0.0 && self.r_p < 1.0
    }
}

fn dissipativity(f0: &DVector<C64>, f1: &DMatrix<C64>, w: &[C64], p: f64) -> Result<DissipativityReport> {
    let kind = NormKind::new(p)?;
    let q = kind.dual();
    let mu0 = f0.iter().map(|z| z.im).fold(f64::INFINITY, f64::min);
    let coupling = row_q_norm(f1, q)?;
    let wp = vector_p_norm(w, p)?;
    let w2 = vector_p_norm(w, 2.0)?;
    let r_p = if coupling == 0.0 {
        0.0
    } else if mu0 <= 0.0 {
        f64::INFINITY
    } else {
        coupling * wp / mu0
    };
    let condition_2norm = if w2 > 0.0 { (wp / w2).min(1.0) } else { 1.0 };
    Ok(DissipativityReport {
        mu0,
        r_p,
        p,
        q,
        condition_2norm,
        dissipative: mu0 > 0.0 && r_p < condition_2norm,
        degenerate: mu0 == 0.0 && coupling > 0.0,
    })
}

pub fn check_dissipative(ode: &FourierOde, p: f64) -> Result<DissipativityReport> {
    dissipativity(&ode.g0, &ode.g1, ode.initial_phase().as_slice(), p)
}

/// Same report computed from the rescaled data; `mu0` and `R_p` agree with
/// the unrescaled values.
pub fn check_dissipative_rescaled(r: &RescaledProblem, p: f64) -> Result<DissipativityReport> {
    dissipativity(&r.f0, &r.f1, r.w0.as_slice(), p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisEntry {
    pub condition: String,
    pub value: f64,
    pub threshold: f64,
    pub holds: bool,
}

impl HypothesisEntry {
    fn new(condition: &str, value: f64, threshold: f64, holds: bool) -> Self {
        Self {
            condition: condition.to_string(),
            value,
            threshold,
            holds,
        }
    }

    fn below(condition: &str, value: f64, threshold: f64) -> Self {
        Self::new(condition, value, threshold, value < threshold)
    }

    fn at_most(condition: &str, value: f64, threshold: f64) -> Self {
        Self::new(condition, value, threshold, value <= threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub value: f64,
    pub hypotheses_met: bool,
    pub hypothesis_log: Vec<HypothesisEntry>,
    /// Derived quantities worth recording next to the bound.
    pub extras: Vec<(String, f64)>,
}

impl BoundReport {
    fn from_log(name: &str, value: f64, log: Vec<HypothesisEntry>, extras: Vec<(String, f64)>) -> Self {
        let met = log.iter().all(|h| h.holds);
        Self {
            name: name.to_string(),
            value: if met { value } else { f64::INFINITY },
            hypotheses_met: met,
            hypothesis_log: log,
            extras,
        }
    }

    pub fn extra(&self, key: &str) -> Option<f64> {
        self.extras.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

struct RescaledNorms {
    mu0: f64,
    f0_inf: f64,
    f1_q: f64,
    psi1: f64,
}

fn rescaled_norms(r: &RescaledProblem, p: f64) -> Result<RescaledNorms> {
    NormKind::new(p)?;
    Ok(RescaledNorms {
        mu0: r.f0.iter().map(|z| z.im).fold(f64::INFINITY, f64::min),
        f0_inf: r.f0.iter().map(|z| z.norm()).fold(0.0, f64::max),
        f1_q: row_q_norm(&r.f1, dual_exponent(p))?,
        psi1: vector_p_norm(r.w0.as_slice(), p)?,
    })
}

/// `|eta_k|_p <= |Psi_1(0)|_p^{N+1} (|F1|_row,q / mu0)^{N+1-k}` for all time,
/// under dissipativity of the rescaled problem.
pub fn eta_bound_dissipative(
    report: &DissipativityReport,
    rescaled: &RescaledProblem,
    order: usize,
    k: usize,
    p: f64,
) -> Result<BoundReport> {
    let nr = rescaled_norms(rescaled, p)?;
    let ratio = if nr.f1_q == 0.0 { 0.0 } else { nr.f1_q / nr.mu0 };
    let r_rescaled = ratio * nr.psi1;
    let mut log = vec![
        HypothesisEntry::new("mu0 > 0", nr.mu0, 0.0, nr.mu0 > 0.0),
        HypothesisEntry::below("R_p < 1", r_rescaled, 1.0),
        HypothesisEntry::new("1 <= k <= N", k as f64, order as f64, k >= 1 && k <= order),
    ];
    if report.p == p {
        let gap = (report.r_p - r_rescaled).abs();
        log.push(HypothesisEntry::at_most(
            "R_p agrees with the unrescaled report",
            gap,
            1e-10 * r_rescaled.max(1.0),
        ));
    }
    let exponent = (order + 1).saturating_sub(k) as i32;
    let value = nr.psi1.powi(order as i32 + 1) * ratio.powi(exponent);
    Ok(BoundReport::from_log(
        "eta_k_bound_infinite_time",
        value,
        log,
        vec![("R_p".into(), r_rescaled), ("coupling_ratio".into(), ratio)],
    ))
}

/// `T_r = ln(1 / (r |Psi_1(0)|_p)) / (Lambda_p (1 + 1/r))`.
fn t_r(psi1: f64, lambda: f64, r: f64) -> f64 {
    if lambda == 0.0 {
        f64::INFINITY
    } else {
        (1.0 / (r * psi1)).ln() / (lambda * (1.0 + 1.0 / r))
    }
}

/// `min{T_r, ln r / (|F0|_inf + |F1|_row,q)}`.
pub fn t_max_finite_time(rescaled: &RescaledProblem, r: f64, p: f64) -> Result<f64> {
    let nr = rescaled_norms(rescaled, p)?;
    let growth = nr.f0_inf + nr.f1_q;
    let second = if growth == 0.0 {
        f64::INFINITY
    } else {
        r.ln() / growth
    };
    Ok(t_r(nr.psi1, nr.f0_inf.max(nr.f1_q), r).min(second))
}

/// `|eta(t)|_p <= (1/r) (exp((|F0|_inf + |F1|_row,q) t) / r)^N` for `t <= T_r`.
pub fn eta_bound_finite_time(
    rescaled: &RescaledProblem,
    order: usize,
    r: f64,
    t: f64,
    p: f64,
) -> Result<BoundReport> {
    let nr = rescaled_norms(rescaled, p)?;
    let lambda = nr.f0_inf.max(nr.f1_q);
    let growth = nr.f0_inf + nr.f1_q;
    let tr = t_r(nr.psi1, lambda, r);
    let t_max = tr.min(if growth == 0.0 {
        f64::INFINITY
    } else {
        r.ln() / growth
    });
    let log = vec![
        HypothesisEntry::new("r > 1", r, 1.0, r > 1.0),
        HypothesisEntry::below("|Psi_1(0)|_p < 1/r", nr.psi1, 1.0 / r),
        HypothesisEntry::at_most("t <= T_r", t, tr),
        HypothesisEntry::new("N >= 2", order as f64, 2.0, order >= 2),
    ];
    let value = ((growth * t).exp() / r).powi(order as i32) / r;
    Ok(BoundReport::from_log(
        "eta_bound_finite_time",
        value,
        log,
        vec![
            ("Lambda_p".into(), lambda),
            ("T_r".into(), tr),
            ("T_max".into(), t_max),
        ],
    ))
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// `(e - 1) j e^2 / (k + 1)!`.
pub fn taylor_remainder_bound(j: usize, k: usize) -> f64 {
    (E - 1.0) * j as f64 * E * E / factorial(k + 1)
}

/// Remainder bound times the growth constant and `|Psi(0)|`.
pub fn taylor_truncation_bound(j: usize, k: usize, c_estimate: f64, psi0_norm: f64) -> f64 {
    taylor_remainder_bound(j, k) * c_estimate * psi0_norm
}

/// `max_j {-j mu0 + (2j-1)/2 |F1|_row,2}` over the blocks `1..=N`.
pub fn gershgorin_envelope(op: &LinearOperatorLN) -> Result<f64> {
    let mu0 = op.mu0();
    let coupling = row_q_norm(op.f1(), 2.0)?;
    Ok((1..=op.order())
        .map(|j| -(j as f64) * mu0 + (2.0 * j as f64 - 1.0) / 2.0 * coupling)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Certifies `sup_t |exp(L t)|_2 <= 1` through `mu_2(L) <= 1e-10`.
pub fn stability_certificate(op: &LinearOperatorLN) -> Result<BoundReport> {
    let dense = dense_ln(op)?;
    let mu2 = log_norm_2(&dense)?;
    let envelope = gershgorin_envelope(op)?;
    let log = vec![
        HypothesisEntry::at_most("mu_2(L) <= 1e-10", mu2, 1e-10),
        HypothesisEntry::new(
            "Gershgorin envelope >= mu_2(L)",
            envelope,
            mu2,
            envelope >= mu2 - 1e-10 * (1.0 + mu2.abs()),
        ),
    ];
    let met = log.iter().all(|h| h.holds);
    Ok(BoundReport {
        name: "stability_certificate".into(),
        value: mu2,
        hypotheses_met: met,
        hypothesis_log: log,
        extras: vec![("gershgorin_envelope".into(), envelope)],
    })
}

/// Largest horizon admitted without dissipativity:
/// `min{ ln(nu / (r |exp(i u0)|_p)) / (max{alpha, nu |G1|_row,q} (1 + 1/r)),
///       ln(r/e) / (alpha + nu |G1|_row,q) }`.
pub fn t_max_nondissipative(rescaled: &RescaledProblem, r: f64, p: f64, alpha: f64) -> Result<f64> {
    if !(r >= E * (1.0 - 1e-15)) {
        return Err(Error::hypothesis(format!("r must be at least e, got {r}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    let nr = rescaled_norms(rescaled, p)?;
    // nu / |exp(i u0)|_p = 1 / |w0|_p and nu |G1| = |F1|.
    let headroom = 1.0 / (r * nr.psi1);
    if !(headroom > 1.0) {
        return Err(Error::hypothesis(format!(
            "nu must exceed r |exp(i u0)|_p (ratio {headroom:.6})"
        )));
    }
    let first = headroom.ln() / (alpha.max(nr.f1_q) * (1.0 + 1.0 / r));
    let second = (r / E).ln().max(0.0) / (alpha + nr.f1_q);
    Ok(first.min(second))
}
