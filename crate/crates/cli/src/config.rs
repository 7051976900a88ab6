//! JSON problem files: `{ode, readout, run, overrides}` with complex numbers
//! as `[re, im]` pairs and multi-indices as integer arrays.

use std::path::Path;

use cfl_core::prelude::*;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::result::Result;

use crate::error::CliError;

pub type Pair = [f64; 2];

fn to_c64(p: &Pair) -> C64 {
    C64::new(p[0], p[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub ode: OdeSection,
    pub readout: ReadoutSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeSection {
    pub g0: Vec<Pair>,
    /// Row-major.
    pub g1: Vec<Vec<Pair>>,
    pub u0: Vec<Pair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSection {
    pub degree: usize,
    pub terms: Vec<ReadoutTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutTerm {
    pub index: Vec<usize>,
    pub coeff: Pair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeChoice {
    #[default]
    Auto,
    Dissipative,
    Nondissipative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub horizon: f64,
    pub epsilon: f64,
    pub p: f64,
    pub regime: RegimeChoice,
    pub alpha: Option<f64>,
    /// Short-time regime inputs.
    pub r: Option<f64>,
    pub nu: Option<f64>,
    pub oracle_tol: f64,
    pub trajectory_points: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            epsilon: 1e-3,
            p: 2.0,
            regime: RegimeChoice::Auto,
            alpha: None,
            r: None,
            nu: None,
            oracle_tol: 1e-11,
            trajectory_points: 101,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n_order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Replaces the recipe's rescaling factor in the dissipative regime.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

impl Overrides {
    /// Parses `N=4,k=6,m=10,nu=2.5`.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut out = Overrides::default();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("override `{item}` is not key=value")))?;
            let bad = || CliError::config(format!("override `{item}` has an invalid value"));
            match key.trim() {
                "N" => out.n_order = Some(value.trim().parse().map_err(|_| bad())?),
                "k" => out.k = Some(value.trim().parse().map_err(|_| bad())?),
                "m" => out.m = Some(value.trim().parse().map_err(|_| bad())?),
                "nu" => out.nu = Some(value.trim().parse().map_err(|_| bad())?),
                other => return Err(CliError::config(format!("unknown override `{other}`"))),
            }
        }
        Ok(out)
    }

    /// Entries set in `other` win.
    pub fn merged(&self, other: &Overrides) -> Overrides {
        Overrides {
            n_order: other.n_order.or(self.n_order),
            k: other.k.or(self.k),
            m: other.m.or(self.m),
            nu: other.nu.or(self.nu),
        }
    }
}

/// A parsed config plus the SHA-256 of the file it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    pub digest: String,
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let config: Config =
        serde_json::from_slice(&bytes).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(LoadedConfig {
        config,
        digest: format!("{:x}", Sha256::digest(&bytes)),
    })
}

impl Config {
    pub fn validate(&self) -> Result<(), CliError> {
        let run = &self.run;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::config(format!(
                    "run.{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("horizon", run.horizon)?;
        positive("epsilon", run.epsilon)?;
        positive("oracle_tol", run.oracle_tol)?;
        if !(run.p >= 1.0) {
            return Err(CliError::config(format!(
                "run.p must be at least 1, got {}",
                run.p
            )));
        }
        if let Some(nu) = run.nu {
            positive("nu", nu)?;
        }
        if let Some(nu) = self.overrides.nu {
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(CliError::config(format!(
                    "overrides.nu must be positive, got {nu}"
                )));
            }
        }
        if let Some(r) = run.r {
            positive("r", r)?;
        }
        if let Some(a) = run.alpha {
            positive("alpha", a)?;
        }
        if run.trajectory_points < 2 {
            return Err(CliError::config("run.trajectory_points must be at least 2"));
        }
        Ok(())
    }

    pub fn ode(&self) -> Result<FourierOde, CliError> {
        let n = self.ode.g0.len();
        if self.ode.g1.len() != n || self.ode.g1.iter().any(|row| row.len() != n) {
            return Err(CliError::config(format!("ode.g1 must be {n} x {n}")));
        }
        let g0 = DVector::from_iterator(n, self.ode.g0.iter().map(to_c64));
        let g1 = DMatrix::from_fn(n, n, |i, j| to_c64(&self.ode.g1[i][j]));
        let u0 = DVector::from_iterator(self.ode.u0.len(), self.ode.u0.iter().map(to_c64));
        FourierOde::new(g0, g1, u0).map_err(|e| CliError::core("problem", e))
    }

    pub fn readout(&self) -> Result<ReadoutSpec, CliError> {
        ReadoutSpec::new(
            self.readout.degree,
            self.readout
                .terms
                .iter()
                .map(|t| (t.index.clone(), to_c64(&t.coeff))),
        )
        .map_err(|e| CliError::core("problem", e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "ode": {"g0": [[0.0, 1.0]], "g1": [[[0.2, 0.0]]], "u0": [[0.0, 0.0]]},
        "readout": {"degree": 1, "terms": [{"index": [1], "coeff": [1.0, 0.0]}]}
    }"#;

    #[test]
    fn defaults_fill_run_section() {
        let cfg: Config = serde_json::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.run.epsilon, 1e-3);
        assert_eq!(cfg.run.regime, RegimeChoice::Auto);
        assert_eq!(cfg.ode().unwrap().dim(), 1);
        assert_eq!(cfg.readout().unwrap().degree, 1);
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg: Config = serde_json::from_str(MINIMAL).unwrap();
        cfg.run.nu = Some(0.0);
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
        let mut cfg: Config = serde_json::from_str(MINIMAL).unwrap();
        cfg.ode.g1 = vec![vec![[0.0, 0.0], [0.0, 0.0]]];
        assert!(cfg.ode().is_err());
        assert!(serde_json::from_str::<Config>(&MINIMAL.replace("\"ode\"", "\"odee\"")).is_err());
    }

    #[test]
    fn override_strings() {
        let o = Overrides::parse("N=4, k=6,m=10,nu=2.5").unwrap();
        assert_eq!(o.n_order, Some(4));
        assert_eq!(o.k, Some(6));
        assert_eq!(o.m, Some(10));
        assert_eq!(o.nu, Some(2.5));
        assert_eq!(Overrides::parse("").unwrap(), Overrides::default());
        assert!(Overrides::parse("q=1").is_err());
        assert!(Overrides::parse("N=x").is_err());
        let base = Overrides {
            k: Some(3),
            m: Some(9),
            ..Overrides::default()
        };
        let merged = base.merged(&o);
        assert_eq!(merged.k, Some(6));
        assert_eq!(merged.m, Some(10));
    }
}
