//! Truncated Taylor time stepping of the lifted linear system.
//!
//! One step applies `V_k = sum_{j<=k} (L h)^j / j!` to the current state. The
//! block system linking consecutive steps is lower bidiagonal, so it is solved
//! exactly by forward substitution.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linearize::{dense_ln, LiftedState, LinearOperatorLN};
use crate::norms::op_norm;
use crate::{Error, Result, C64};

/// Stored states beyond this many entries keep only the first and last step.
const HISTORY_BUDGET: usize = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorConfig {
    pub m: usize,
    pub h: f64,
    pub k: usize,
}

impl TaylorConfig {
    pub fn new(m: usize, h: f64, k: usize) -> Result<Self> {
        if m == 0 || k == 0 {
            return Err(Error::invalid(format!(
                "need m >= 1 and k >= 1, got m={m}, k={k}"
            )));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::invalid(format!("step size must be positive, got {h}")));
        }
        Ok(Self { m, h, k })
    }

    /// Config with `m` steps covering `[0, horizon]`.
    pub fn for_horizon(horizon: f64, m: usize, k: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("need m >= 1"));
        }
        Self::new(m, horizon / m as f64, k)
    }

    pub fn horizon(&self) -> f64 {
        self.m as f64 * self.h
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// `Phi_0..Phi_m`, or only `Phi_0` and `Phi_m` when the history would be
    /// too large (see `history_complete`).
    pub phis: Vec<LiftedState>,
    pub history_complete: bool,
    /// Largest relative mismatch between each step and the same step rebuilt
    /// from the explicit rows `y_i = (L h / i) y_{i-1}` of the block system.
    pub residual: f64,
}

impl SolveResult {
    pub fn final_state(&self) -> &LiftedState {
        self.phis.last().expect("a solve stores at least one state")
    }
}

/// Reusable buffers for repeated Taylor steps.
struct Stepper<'a> {
    op: &'a LinearOperatorLN,
    cfg: TaylorConfig,
    acc: LiftedState,
    tmp: LiftedState,
}

impl<'a> Stepper<'a> {
    fn new(op: &'a LinearOperatorLN, cfg: TaylorConfig) -> Result<Self> {
        Ok(Self {
            op,
            cfg,
            acc: LiftedState::zeros(op.dim(), op.order())?,
            tmp: LiftedState::zeros(op.dim(), op.order())?,
        })
    }

    /// Horner: `u <- v; for i = k..1: u <- v + (h/i) L u`.
    fn horner(&mut self, v: &LiftedState) -> Result<LiftedState> {
        self.acc.clone_from(v);
        for i in (1..=self.cfg.k).rev() {
            self.op.apply_into(&self.acc, &mut self.tmp)?;
            self.acc.clone_from(v);
            self.acc.axpy(C64::new(self.cfg.h / i as f64, 0.0), &self.tmp);
        }
        Ok(self.acc.clone())
    }

    /// Same polynomial summed term by term, as the unrolled system rows do.
    fn series(&mut self, v: &LiftedState) -> Result<LiftedState> {
        let mut term = v.clone();
        let mut sum = v.clone();
        for i in 1..=self.cfg.k {
            self.op.apply_into(&term, &mut self.tmp)?;
            term.clone_from(&self.tmp);
            let scale = C64::new(self.cfg.h / i as f64, 0.0);
            for b in 1..=term.order() {
                for z in term.block_mut(b) {
                    *z *= scale;
                }
            }
            sum.axpy(C64::new(1.0, 0.0), &term);
        }
        Ok(sum)
    }
}

pub fn apply_vk(op: &LinearOperatorLN, cfg: &TaylorConfig, v: &LiftedState) -> Result<LiftedState> {
    Stepper::new(op, *cfg)?.horner(v)
}

/// Solves the Taylor block system for `Phi_0 = psi0`, `Phi_{j+1} = V_k Phi_j`.
pub fn forward_solve(op: &LinearOperatorLN, cfg: &TaylorConfig, psi0: &LiftedState) -> Result<SolveResult> {
    if psi0.dim() != op.dim() || psi0.order() != op.order() {
        return Err(Error::Shape {
            what: "initial lifted state",
            expected: op.total_len(),
            got: psi0.total_len(),
        });
    }
    let keep_all = (cfg.m + 1).saturating_mul(psi0.total_len()) <= HISTORY_BUDGET;
    let mut stepper = Stepper::new(op, *cfg)?;
    let mut phis = vec![psi0.clone()];
    let mut current = psi0.clone();
    let mut residual: f64 = 0.0;
    for step in 0..cfg.m {
        let next = stepper.horner(&current)?;
        if !next.is_finite() {
            return Err(Error::Divergence {
                step: step + 1,
                total: cfg.m,
            });
        }
        let rows = stepper.series(&current)?;
        let scale = current.norm_p(2.0).max(f64::MIN_POSITIVE);
        residual = residual.max(rows.sub(&next).norm_p(2.0) / scale);
        current = next;
        if keep_all {
            phis.push(current.clone());
        }
    }
    if !keep_all {
        phis.push(current);
    }
    Ok(SolveResult {
        phis,
        history_complete: keep_all,
        residual,
    })
}

/// `c . Phi_m`.
pub fn readout_value(result: &SolveResult, coeff_blocks: &LiftedState) -> Result<C64> {
    let last = result.final_state();
    if last.dim() != coeff_blocks.dim() || last.order() != coeff_blocks.order() {
        return Err(Error::Shape {
            what: "coefficient blocks",
            expected: last.total_len(),
            got: coeff_blocks.total_len(),
        });
    }
    Ok(coeff_blocks.dot(last))
}

/// Dense `V_k` for the diagnostics.
pub fn dense_vk(op: &LinearOperatorLN, cfg: &TaylorConfig) -> Result<DMatrix<C64>> {
    dense_partial_exp(&dense_ln(op)?.scale(cfg.h), cfg.k, 0)
}

/// `sum_{i=0}^{k-l} l! A^i / (l+i)!`.
fn dense_partial_exp(a: &DMatrix<C64>, k: usize, l: usize) -> Result<DMatrix<C64>> {
    let n = a.nrows();
    let mut total = DMatrix::<C64>::identity(n, n);
    let mut term = DMatrix::<C64>::identity(n, n);
    for i in 1..=(k - l) {
        term = (&term * a).scale(1.0 / (l + i) as f64);
        total += &term;
    }
    Ok(total)
}

/// `|W_{l,k}|_2` with `W_{l,k} = sum_{i=0}^{k-l} l! (L h)^i / (l+i)!`.
pub fn w_matrix_norm(op: &LinearOperatorLN, cfg: &TaylorConfig, l: usize) -> Result<f64> {
    if l > cfg.k {
        return Err(Error::invalid(format!(
            "W index {l} exceeds the Taylor order {}",
            cfg.k
        )));
    }
    let a = dense_ln(op)?.scale(cfg.h);
    op_norm(&dense_partial_exp(&a, cfg.k, l)?, 2.0)
}
