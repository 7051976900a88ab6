//! Command-line front end: JSON problem files in, manifests and CSV tables out.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use commands::{cmd_estimate, cmd_oracle, cmd_solve, cmd_sweep, fmt_f64, RunManifest, SweepAxis};
pub use config::{Config, Overrides};
pub use error::{CliError, ErrorKind};
