//! Fixed problem instances shared by the benchmarks.

use cfl_core::prelude::*;
use nalgebra::{DMatrix, DVector};

/// A deterministic dissipative problem in `n` variables with `R_2 = 1/2`.
pub fn dissipative_problem(n: usize) -> (FourierOde, ReadoutSpec) {
    let g0 = DVector::from_fn(n, |i, _| C64::new(0.1 * i as f64 - 0.3, 1.0 + 0.25 * i as f64));
    let g1 = DMatrix::from_fn(n, n, |i, j| {
        let phase = 0.7 * (i as f64) - 0.4 * (j as f64);
        C64::from_polar(1.0 / (1.0 + (i + j) as f64), phase)
    });
    let u0 = DVector::from_fn(n, |i, _| C64::new(0.3 * i as f64, 0.1));
    let raw = FourierOde::new(g0.clone(), g1.clone(), u0.clone()).expect("valid problem");
    let rep = check_dissipative(&raw, 2.0).expect("valid norm");
    let ode = FourierOde::new(g0, g1.scale(0.5 / rep.r_p), u0).expect("valid problem");
    let mut index = vec![0; n];
    index[0] = 1;
    let readout = ReadoutSpec::new(1, vec![(index, C64::new(1.0, 0.0))]).expect("valid readout");
    (ode, readout)
}

/// Lifted operator and initial state at truncation order `order`, rescaled
/// with `nu = 1`.
pub fn lifted(n: usize, order: usize) -> (LinearOperatorLN, LiftedState, RescaledProblem) {
    let (ode, readout) = dissipative_problem(n);
    let rescaled = rescale(&ode, &readout, 1.0).expect("positive nu");
    let op = LinearOperatorLN::new(&rescaled, order).expect("within budget");
    let psi0 = lift_initial(&rescaled, order).expect("within budget");
    (op, psi0, rescaled)
}
