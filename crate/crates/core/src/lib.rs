//! Carleman-Fourier linearization of ODEs with a Fourier nonlinearity.
//!
//! The problem is `du/dt = G1 exp(i u) + G0` with complex state `u` and the
//! scalar readout `g(u) = sum_j d_j exp(i u . j)`. The crate rescales the
//! problem, lifts it to the linear system on tensor powers of `exp(i x)`,
//! steps that system with truncated Taylor polynomials and reads out the
//! answer. Every analytic error bound and parameter recipe is exposed as a
//! numeric function so it can be checked against the reference integrator in
//! [`oracle`].
//!
//! Pipeline at a glance:
//!
//! ```
//! use cfl_core::prelude::*;
//! use nalgebra::{DMatrix, DVector};
//!
//! let ode = FourierOde::new(
//!     DVector::from_vec(vec![C64::new(0.3, 2.0)]),
//!     DMatrix::from_element(1, 1, C64::new(0.5, 0.0)),
//!     DVector::from_vec(vec![C64::new(0.0, 0.0)]),
//! )
//! .unwrap();
//! let readout = ReadoutSpec::new(1, vec![(vec![1], C64::new(1.0, 0.0))]).unwrap();
//! let params = select_dissipative(&ode, &readout, 1e-3, 1.0, 2.0, None).unwrap();
//! let rescaled = rescale(&ode, &readout, params.nu).unwrap();
//! let op = LinearOperatorLN::new(&rescaled, params.n_order).unwrap();
//! let psi0 = lift_initial(&rescaled, params.n_order).unwrap();
//! let cfg = TaylorConfig::new(params.m, params.h, params.k).unwrap();
//! let result = forward_solve(&op, &cfg, &psi0).unwrap();
//! let coeffs = expand_coeff_vector(&readout, &rescaled, params.n_order).unwrap();
//! let estimate = readout_value(&result, &coeffs).unwrap();
//!
//! let traj = integrate_ode(&ode, 1.0, 1e-11).unwrap();
//! let exact = eval_readout(&readout, traj.final_state()).unwrap();
//! assert!((estimate - exact).norm() < 1e-3);
//! ```

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod estimator;
pub mod linearize;
pub mod norms;
pub mod oracle;
pub mod params;
pub mod problem;
pub mod taylor;

pub use num_complex::Complex64 as C64;

pub use error::{Error, Result};

/// Everything needed to run the pipeline, in one import.
pub mod prelude {
    pub use crate::bounds::{
        check_dissipative, check_dissipative_rescaled, eta_bound_dissipative, eta_bound_finite_time,
        stability_certificate, t_max_nondissipative, taylor_remainder_bound, taylor_truncation_bound,
        BoundReport, DissipativityReport, HypothesisEntry,
    };
    pub use crate::error::{Error, Result};
    pub use crate::estimator::{
        query_counts, scaling_alpha_b, scaling_alpha_c, scaling_alpha_inv, scaling_alpha_ln, EncodingMode,
        ResourceEstimate,
    };
    pub use crate::linearize::{
        apply_b0, apply_b1, apply_ln, dense_budget, dense_ln, lift_initial, LiftedState, LinearOperatorLN,
    };
    pub use crate::norms::{
        gamma_growth_bound, growth_envelope, log_norm_2, matrix_exp, op_norm, row_q_norm, vector_p_norm,
        GrowthEnvelope, NormKind,
    };
    pub use crate::oracle::{
        closed_form_1d, exact_lifted, integrate, integrate_ode, linear_reference, measure_eta, FourierField,
        Trajectory,
    };
    pub use crate::params::{
        end_to_end_error_budget, select_dissipative, select_nondissipative, ErrorBudget, MeasuredErrors,
        ParamSet, Regime,
    };
    pub use crate::problem::{
        eval_readout, expand_coeff_vector, rescale, tensor_to_count, FourierOde, MultiIndexCodec,
        ReadoutSpec, RescaledProblem,
    };
    pub use crate::taylor::{
        apply_vk, forward_solve, readout_value, w_matrix_norm, SolveResult, TaylorConfig,
    };
    pub use crate::C64;
}
