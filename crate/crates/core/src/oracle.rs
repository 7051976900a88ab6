//! Reference solutions of the nonlinear ODE.
//!
//! [`integrate`] is an adaptive Dormand-Prince 5(4) integrator over complex
//! vectors with the method's 4th-order continuous extension. [`closed_form_1d`]
//! solves the scalar case exactly through the substitution `z = exp(-i x)`,
//! which turns `dw/dt = i F0 w + i F1 w^2` into a linear equation.

use nalgebra::{DMatrix, DVector};

use crate::linearize::{dense_ln, lift_vector, LiftedState, LinearOperatorLN};
use crate::norms::{exp_at, p_norm_unchecked};
use crate::problem::{FourierOde, RescaledProblem};
use crate::taylor::{forward_solve, TaylorConfig};
use crate::{Error, Result, C64};

/// The vector field `F1 exp(i x) + F0`.
#[derive(Debug, Clone)]
pub struct FourierField {
    f0: DVector<C64>,
    f1: DMatrix<C64>,
}

impl FourierField {
    pub fn new(f0: DVector<C64>, f1: DMatrix<C64>) -> Result<Self> {
        let n = f0.len();
        if n == 0 || f1.nrows() != n || f1.ncols() != n {
            return Err(Error::invalid("field needs F0 of length n and F1 of size n x n"));
        }
        Ok(Self { f0, f1 })
    }

    pub fn from_ode(ode: &FourierOde) -> Self {
        Self {
            f0: ode.g0.clone(),
            f1: ode.g1.clone(),
        }
    }

    pub fn from_rescaled(r: &RescaledProblem) -> Self {
        Self {
            f0: r.f0.clone(),
            f1: r.f1.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.f0.len()
    }

    fn eval(&self, x: &[C64], out: &mut [C64]) {
        let phase: Vec<C64> = x.iter().map(|xi| (C64::i() * xi).exp()).collect();
        for (r, slot) in out.iter_mut().enumerate().take(self.dim()) {
            let mut acc = self.f0[r];
            for (c, p) in phase.iter().enumerate() {
                acc += self.f1[(r, c)] * p;
            }
            *slot = acc;
        }
    }
}

/// One accepted step with its continuous-extension coefficients.
#[derive(Debug, Clone)]
struct Segment {
    t0: f64,
    h: f64,
    coef: [Vec<C64>; 5],
}

impl Segment {
    fn eval(&self, t: f64) -> Vec<C64> {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.coef;
        (0..r1.len())
            .map(|i| r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i]))))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<C64>>,
    pub tol: f64,
    /// Max-norm difference at the final time between replaying the accepted
    /// step sequence and replaying it with every step halved, times 32/31.
    pub est_global_error: f64,
    segments: Vec<Segment>,
}

impl Trajectory {
    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one time")
    }

    pub fn final_state(&self) -> &[C64] {
        self.states.last().expect("trajectory has at least one state")
    }

    /// Interpolated state at time `t`.
    pub fn state_at(&self, t: f64) -> Result<Vec<C64>> {
        let end = self.horizon();
        let slack = 1e-12 * end.max(1.0);
        if !(t >= -slack && t <= end + slack) {
            return Err(Error::invalid(format!(
                "time {t} outside the integrated range [0, {end}]"
            )));
        }
        if t <= 0.0 || self.segments.is_empty() {
            return Ok(self.states[0].clone());
        }
        if t >= end {
            return Ok(self.final_state().to_vec());
        }
        let i = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        Ok(self.segments[i.min(self.segments.len() - 1)].eval(t))
    }

    /// `exp(i x(t))`.
    pub fn phase_at(&self, t: f64) -> Result<Vec<C64>> {
        Ok(self
            .state_at(t)?
            .into_iter()
            .map(|x| (C64::i() * x).exp())
            .collect())
    }

    pub fn sample(&self, times: &[f64]) -> Result<Vec<Vec<C64>>> {
        times.iter().map(|&t| self.state_at(t)).collect()
    }
}

// Dormand-Prince 5(4) tableau; the field is autonomous so the nodes are unused.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const MAX_STEPS: usize = 5_000_000;

/// Result of a single Dormand-Prince step.
struct Step {
    y_new: Vec<C64>,
    k1: Vec<C64>,
    k7: Vec<C64>,
    stages: [Vec<C64>; 6],
    err: Vec<C64>,
}

fn combine(y: &[C64], h: f64, terms: &[(f64, &[C64])]) -> Vec<C64> {
    let mut out = y.to_vec();
    for (a, k) in terms {
        if *a == 0.0 {
            continue;
        }
        let s = h * a;
        for (o, ki) in out.iter_mut().zip(k.iter()) {
            *o += ki * s;
        }
    }
    out
}

fn dp_step<F: Fn(&[C64], &mut [C64])>(f: &F, y: &[C64], k1: &[C64], h: f64) -> Step {
    let n = y.len();
    let zero = vec![C64::new(0.0, 0.0); n];
    let mut k2 = zero.clone();
    f(&combine(y, h, &[(A21, k1)]), &mut k2);
    let mut k3 = zero.clone();
    f(&combine(y, h, &[(A31, k1), (A32, &k2)]), &mut k3);
    let mut k4 = zero.clone();
    f(&combine(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]), &mut k4);
    let mut k5 = zero.clone();
    f(
        &combine(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        &mut k5,
    );
    let mut k6 = zero.clone();
    f(
        &combine(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        &mut k6,
    );
    let y_new = combine(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let mut k7 = zero.clone();
    f(&y_new, &mut k7);
    let err = combine(
        &zero,
        h,
        &[(E1, k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
    );
    Step {
        y_new,
        k1: k1.to_vec(),
        k7,
        stages: [k1.to_vec(), k2, k3, k4, k5, k6],
        err,
    }
}

fn error_norm(err: &[C64], y: &[C64], y_new: &[C64], tol: f64) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y.iter().zip(y_new))
        .map(|(e, (a, b))| {
            let sk = tol + tol * a.norm().max(b.norm());
            (e.norm() / sk).powi(2)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

fn finite(v: &[C64]) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn initial_step<F: Fn(&[C64], &mut [C64])>(f: &F, y0: &[C64], f0: &[C64], tol: f64, span: f64) -> f64 {
    let scaled = |v: &[C64]| {
        let s: f64 = v
            .iter()
            .zip(y0)
            .map(|(x, y)| (x.norm() / (tol + tol * y.norm())).powi(2))
            .sum();
        (s / v.len() as f64).sqrt()
    };
    let d0 = scaled(y0);
    let d1 = scaled(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span);
    let y1 = combine(y0, h0, &[(1.0, f0)]);
    let mut f1 = vec![C64::new(0.0, 0.0); y0.len()];
    f(&y1, &mut f1);
    let diff: Vec<C64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Adaptive integration of `dy/dt = f(y)` over `[0, horizon]`.
fn dopri<F: Fn(&[C64], &mut [C64])>(f: &F, y0: &[C64], horizon: f64, tol: f64) -> Result<Trajectory> {
    let n = y0.len();
    let mut times = vec![0.0];
    let mut states = vec![y0.to_vec()];
    let mut segments = Vec::new();
    if horizon == 0.0 {
        return Ok(Trajectory {
            times,
            states,
            tol,
            est_global_error: 0.0,
            segments,
        });
    }
    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut k1 = vec![C64::new(0.0, 0.0); n];
    f(&y, &mut k1);
    if !finite(&k1) {
        return Err(Error::StepUnderflow { t });
    }
    let mut h = initial_step(f, &y, &k1, tol, horizon);
    let mut steps = 0;
    while t < horizon {
        if steps >= MAX_STEPS || h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t });
        }
        steps += 1;
        let last = t + h >= horizon * (1.0 - 1e-15);
        let h_try = if last { horizon - t } else { h };
        let step = dp_step(f, &y, &k1, h_try);
        let ok = finite(&step.y_new) && finite(&step.k7);
        let err = if ok {
            error_norm(&step.err, &y, &step.y_new, tol)
        } else {
            f64::INFINITY
        };
        if err <= 1.0 {
            let [s1, _, s3, s4, s5, s6] = &step.stages;
            let ydiff: Vec<C64> = step.y_new.iter().zip(&y).map(|(a, b)| a - b).collect();
            let bspl: Vec<C64> = step.k1.iter().zip(&ydiff).map(|(k, d)| k * h_try - d).collect();
            let r4: Vec<C64> = ydiff
                .iter()
                .zip(&step.k7)
                .zip(&bspl)
                .map(|((d, k7), b)| d - k7 * h_try - b)
                .collect();
            let r5 = combine(
                &vec![C64::new(0.0, 0.0); n],
                h_try,
                &[(D1, s1), (D3, s3), (D4, s4), (D5, s5), (D6, s6), (D7, &step.k7)],
            );
            segments.push(Segment {
                t0: t,
                h: h_try,
                coef: [y.clone(), ydiff, bspl, r4, r5],
            });
            t = if last { horizon } else { t + h_try };
            y = step.y_new;
            k1 = step.k7;
            times.push(t);
            states.push(y.clone());
            let fac = if err == 0.0 {
                10.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 10.0)
            };
            h = h_try * fac;
        } else {
            let fac = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            h = h_try * fac;
        }
    }
    let est_global_error = step_doubling_estimate(f, y0, &times);
    Ok(Trajectory {
        times,
        states,
        tol,
        est_global_error,
        segments,
    })
}

/// Replays the accepted grid with fixed steps, once as is and once with
/// every step halved, and compares the end states.
fn step_doubling_estimate<F: Fn(&[C64], &mut [C64])>(f: &F, y0: &[C64], times: &[f64]) -> f64 {
    let n = y0.len();
    let advance = |y: &[C64], h: f64| {
        let mut k1 = vec![C64::new(0.0, 0.0); n];
        f(y, &mut k1);
        dp_step(f, y, &k1, h).y_new
    };
    let mut coarse = y0.to_vec();
    let mut fine = y0.to_vec();
    for w in times.windows(2) {
        let h = w[1] - w[0];
        coarse = advance(&coarse, h);
        fine = advance(&fine, 0.5 * h);
        fine = advance(&fine, 0.5 * h);
    }
    let diff = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    diff * 32.0 / 31.0
}

fn check_tolerance(tol: f64) -> Result<()> {
    if !(1e-13..=1e-3).contains(&tol) {
        return Err(Error::invalid(format!(
            "integrator tolerance {tol} outside [1e-13, 1e-3]"
        )));
    }
    Ok(())
}

/// Integrates `dx/dt = F1 exp(i x) + F0` from `x0` over `[0, horizon]`.
pub fn integrate(field: &FourierField, x0: &[C64], horizon: f64, tol: f64) -> Result<Trajectory> {
    check_tolerance(tol)?;
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::invalid(format!(
            "horizon must be finite and non-negative, got {horizon}"
        )));
    }
    if x0.len() != field.dim() {
        return Err(Error::Shape {
            what: "initial state",
            expected: field.dim(),
            got: x0.len(),
        });
    }
    dopri(&|x: &[C64], out: &mut [C64]| field.eval(x, out), x0, horizon, tol)
}

/// Integrates the unrescaled problem in the variable `u`.
pub fn integrate_ode(ode: &FourierOde, horizon: f64, tol: f64) -> Result<Trajectory> {
    integrate(&FourierField::from_ode(ode), ode.u0.as_slice(), horizon, tol)
}

/// `(exp(a) - 1) / a`, accurate near zero.
fn phi1(a: C64) -> C64 {
    if a.norm() < 1e-4 {
        C64::new(1.0, 0.0) + a / 2.0 + a * a / 6.0 + a * a * a / 24.0
    } else {
        (a.exp() - 1.0) / a
    }
}

/// `exp(i x(t))` for the scalar equation `dx/dt = F1 exp(i x) + F0`.
///
/// With `w = exp(i x)` and `z = 1/w`, `dz/dt = -i F0 z - i F1`, so
/// `z(t) = exp(-i F0 t) z0 + (F1/F0) (exp(-i F0 t) - 1)`.
pub fn closed_form_1d(f0: C64, f1: C64, x0: C64, t: f64) -> Result<C64> {
    let z0 = (-C64::i() * x0).exp();
    let a = -C64::i() * f0 * t;
    // (exp(-i F0 t) - 1)/F0 = -i t phi1(-i F0 t), which stays finite at F0 = 0.
    let z = a.exp() * z0 + f1 * (-C64::i() * t) * phi1(a);
    if !(z.norm() > 1e-300) || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::Pole { t });
    }
    Ok(z.inv())
}

/// Exact lifted state `exp(i x(t))^{(x) j}`, `j = 1..order`.
pub fn exact_lifted(traj: &Trajectory, order: usize, t: f64) -> Result<LiftedState> {
    lift_vector(&traj.phase_at(t)?, order)
}

/// `exp(L t) psi0` for the truncated system by a dense exponential.
pub fn linear_reference_dense(op: &LinearOperatorLN, psi0: &LiftedState, t: f64) -> Result<LiftedState> {
    let l = dense_ln(op)?;
    let e = exp_at(&l, t)?;
    let out = e * psi0.flatten();
    LiftedState::from_flat(op.dim(), op.order(), out.as_slice())
}

/// Largest operator accepted by the dense path of [`linear_reference`].
pub const DENSE_REFERENCE_LIMIT: usize = 1024;

/// How [`linear_reference`] obtained its answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMethod {
    DenseExponential,
    HighOrderTaylor,
}

impl ReferenceMethod {
    pub fn label(self) -> &'static str {
        match self {
            ReferenceMethod::DenseExponential => "dense_exponential",
            ReferenceMethod::HighOrderTaylor => "taylor_order_40",
        }
    }
}

/// `exp(L t) psi0`: the dense exponential for small operators, otherwise
/// degree-40 Taylor steps with `|L|_2 h <= 1/2`, whose per-step remainder is
/// below 2^-40/40!.
pub fn linear_reference(
    op: &LinearOperatorLN,
    psi0: &LiftedState,
    t: f64,
) -> Result<(LiftedState, ReferenceMethod)> {
    if op.total_len() <= DENSE_REFERENCE_LIMIT.min(crate::linearize::dense_budget()) {
        return Ok((
            linear_reference_dense(op, psi0, t)?,
            ReferenceMethod::DenseExponential,
        ));
    }
    if t == 0.0 {
        return Ok((psi0.clone(), ReferenceMethod::HighOrderTaylor));
    }
    let bound = op.norm_bound(2.0)?;
    let m = ((2.0 * bound * t).ceil() as usize).max(1);
    let cfg = TaylorConfig::for_horizon(t, m, 40)?;
    let res = forward_solve(op, &cfg, psi0)?;
    Ok((res.final_state().clone(), ReferenceMethod::HighOrderTaylor))
}

/// `|Psi_k(t) - Psi^(N)_k(t)|_p` with `truncated` holding `Psi^(N)(t)`.
pub fn measure_eta(traj: &Trajectory, truncated: &LiftedState, k: usize, t: f64, p: f64) -> Result<f64> {
    if k == 0 || k > truncated.order() {
        return Err(Error::invalid(format!(
            "block {k} outside 1..={}",
            truncated.order()
        )));
    }
    let exact = exact_lifted(traj, k, t)?;
    if exact.dim() != truncated.dim() {
        return Err(Error::Shape {
            what: "trajectory dimension",
            expected: truncated.dim(),
            got: exact.dim(),
        });
    }
    Ok(p_norm_unchecked(
        exact
            .block(k)
            .iter()
            .zip(truncated.block(k))
            .map(|(a, b)| (a - b).norm()),
        p,
    ))
}

/// p-norm of the stacked error `Psi(t) - Psi^(N)(t)` over all blocks.
pub fn measure_eta_total(traj: &Trajectory, truncated: &LiftedState, t: f64, p: f64) -> Result<f64> {
    let exact = exact_lifted(traj, truncated.order(), t)?;
    if exact.dim() != truncated.dim() {
        return Err(Error::Shape {
            what: "trajectory dimension",
            expected: truncated.dim(),
            got: exact.dim(),
        });
    }
    Ok(exact.sub(truncated).norm_p(p))
}
