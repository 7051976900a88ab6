//! Problem data, tensor-index combinatorics and the rescaling `x = u + i ln(nu)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linearize::LiftedState;
use crate::norms::{dual_exponent, p_norm_unchecked};
use crate::{Error, Result, C64};

/// `du/dt = G1 exp(i u) + G0`, `u(0) = u0`, with `exp` acting elementwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierOde {
    pub g0: DVector<C64>,
    pub g1: DMatrix<C64>,
    pub u0: DVector<C64>,
}

fn all_finite<'a>(it: impl IntoIterator<Item = &'a C64>) -> bool {
    it.into_iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

impl FourierOde {
    pub fn new(g0: DVector<C64>, g1: DMatrix<C64>, u0: DVector<C64>) -> Result<Self> {
        let n = g0.len();
        if n == 0 {
            return Err(Error::invalid("the ODE needs at least one dimension"));
        }
        if g1.nrows() != n || g1.ncols() != n {
            return Err(Error::invalid(format!(
                "G1 must be {n}x{n}, got {}x{}",
                g1.nrows(),
                g1.ncols()
            )));
        }
        if u0.len() != n {
            return Err(Error::Shape {
                what: "u0",
                expected: n,
                got: u0.len(),
            });
        }
        if !all_finite(g0.iter()) || !all_finite(g1.iter()) || !all_finite(u0.iter()) {
            return Err(Error::invalid("ODE data must be finite"));
        }
        Ok(Self { g0, g1, u0 })
    }

    pub fn dim(&self) -> usize {
        self.g0.len()
    }

    /// `exp(i u0)` elementwise.
    pub fn initial_phase(&self) -> DVector<C64> {
        self.u0.map(|u| (C64::i() * u).exp())
    }

    /// `min_j Im (G0)_j`.
    pub fn mu0(&self) -> f64 {
        self.g0.iter().map(|z| z.im).fold(f64::INFINITY, f64::min)
    }

    /// `max_j |(G0)_j|`, the smallest admissible oracle normalization.
    pub fn g0_max(&self) -> f64 {
        self.g0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Right-hand side `G1 exp(i u) + G0`.
    pub fn rhs(&self, u: &DVector<C64>) -> DVector<C64> {
        let phase = u.map(|x| (C64::i() * x).exp());
        &self.g1 * phase + &self.g0
    }
}

/// Readout `g(u) = sum_j d_j exp(i u . j)` over multi-indices with `1 <= |j| <= K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutSpec {
    pub degree: usize,
    pub coeffs: BTreeMap<Vec<usize>, C64>,
}

impl ReadoutSpec {
    pub fn new(degree: usize, entries: impl IntoIterator<Item = (Vec<usize>, C64)>) -> Result<Self> {
        if degree == 0 {
            return Err(Error::invalid("readout degree K must be at least 1"));
        }
        let mut coeffs = BTreeMap::new();
        let mut width = None;
        for (key, value) in entries {
            let total: usize = key.iter().sum();
            if total == 0 || total > degree {
                return Err(Error::invalid(format!(
                    "multi-index {key:?} has order {total}, outside 1..={degree}"
                )));
            }
            match width {
                None => width = Some(key.len()),
                Some(w) if w != key.len() => {
                    return Err(Error::invalid("multi-indices of different lengths"));
                }
                _ => {}
            }
            if !all_finite([&value]) {
                return Err(Error::invalid("readout coefficients must be finite"));
            }
            if coeffs.insert(key.clone(), value).is_some() {
                return Err(Error::invalid(format!("multi-index {key:?} given twice")));
            }
        }
        if coeffs.is_empty() {
            return Err(Error::invalid("readout needs at least one coefficient"));
        }
        Ok(Self { degree, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.coeffs.keys().next().map_or(0, Vec::len)
    }

    /// p-norm of the coefficient vector with each `d_j` on a single slot.
    pub fn d_norm(&self, p: f64) -> f64 {
        p_norm_unchecked(self.coeffs.values().map(|z| z.norm()), p)
    }

    /// `|d|_q` for the conjugate `q` of `p`.
    pub fn d_norm_dual(&self, p: f64) -> f64 {
        self.d_norm(dual_exponent(p))
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if self.dim() != n {
            return Err(Error::Shape {
                what: "readout multi-index length",
                expected: n,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

/// The problem after `x = u + i ln(nu)`: `dx/dt = F1 exp(i x) + F0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledProblem {
    pub nu: f64,
    pub f0: DVector<C64>,
    pub f1: DMatrix<C64>,
    pub x0: DVector<C64>,
    pub w0: DVector<C64>,
    pub gamma: f64,
    pub degree: usize,
    pub c_coeffs: BTreeMap<Vec<usize>, C64>,
}

impl RescaledProblem {
    pub fn dim(&self) -> usize {
        self.f0.len()
    }

    /// The rescaled problem seen as an ODE in `x`, with `nu` folded in.
    pub fn as_ode(&self) -> FourierOde {
        FourierOde {
            g0: self.f0.clone(),
            g1: self.f1.clone(),
            u0: self.x0.clone(),
        }
    }

    /// `f(x) = sum_j c_j exp(i x . j)`.
    pub fn eval(&self, x: &[C64]) -> Result<C64> {
        eval_fourier(&self.c_coeffs, x)
    }
}

pub fn rescale(ode: &FourierOde, readout: &ReadoutSpec, nu: f64) -> Result<RescaledProblem> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::invalid(format!(
            "rescaling factor nu must be positive, got {nu}"
        )));
    }
    readout.check_dim(ode.dim())?;
    let shift = C64::new(0.0, nu.ln());
    let w0 = ode.initial_phase().map(|z| z / nu);
    let c_coeffs = readout
        .coeffs
        .iter()
        .map(|(key, d)| {
            let order: usize = key.iter().sum();
            (key.clone(), d * nu.powi(order as i32))
        })
        .collect();
    Ok(RescaledProblem {
        nu,
        f0: ode.g0.clone(),
        f1: ode.g1.scale(nu),
        x0: ode.u0.map(|u| u + shift),
        gamma: w0.norm(),
        w0,
        degree: readout.degree,
        c_coeffs,
    })
}

/// Base-n digit strings of length k, most significant digit first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiIndexCodec {
    pub n: usize,
    pub k: usize,
}

impl MultiIndexCodec {
    pub fn new(n: usize, k: usize) -> Self {
        Self { n, k }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.k as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Zero-based digits of `index`; digit value `d` stands for coordinate `d + 1`.
    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for slot in out.iter_mut().rev() {
            *slot = index % self.n;
            index /= self.n;
        }
        out
    }

    pub fn count(&self, index: usize) -> Vec<usize> {
        let mut counts = vec![0; self.n];
        for d in self.digits(index) {
            counts[d] += 1;
        }
        counts
    }

    /// Tensor index of the lexicographically smallest digit string with the
    /// given counts (digits in ascending order).
    pub fn canonical_index(&self, counts: &[usize]) -> Result<usize> {
        if counts.len() != self.n || counts.iter().sum::<usize>() != self.k {
            return Err(Error::invalid(format!(
                "count vector {counts:?} does not describe a degree-{} index in {} dims",
                self.k, self.n
            )));
        }
        let mut index = 0;
        for (digit, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                index = index * self.n + digit;
            }
        }
        Ok(index)
    }
}

pub fn tensor_to_count(codec: &MultiIndexCodec, tensor_index: usize) -> Result<Vec<usize>> {
    if tensor_index >= codec.len() {
        return Err(Error::invalid(format!(
            "tensor index {tensor_index} out of range for {} slots",
            codec.len()
        )));
    }
    Ok(codec.count(tensor_index))
}

fn eval_fourier(coeffs: &BTreeMap<Vec<usize>, C64>, x: &[C64]) -> Result<C64> {
    let mut total = C64::new(0.0, 0.0);
    for (key, d) in coeffs {
        if key.len() != x.len() {
            return Err(Error::Shape {
                what: "readout argument",
                expected: key.len(),
                got: x.len(),
            });
        }
        let phase: C64 = key.iter().zip(x).map(|(&j, xi)| xi * j as f64).sum();
        total += d * (C64::i() * phase).exp();
    }
    Ok(total)
}

pub fn eval_readout(readout: &ReadoutSpec, u: &[C64]) -> Result<C64> {
    eval_fourier(&readout.coeffs, u)
}

/// Coefficient blocks `c_1..c_N` with every `c_j` on its canonical slot.
pub fn expand_coeff_vector(
    readout: &ReadoutSpec,
    rescaled: &RescaledProblem,
    order: usize,
) -> Result<LiftedState> {
    if order < readout.degree {
        return Err(Error::invalid(format!(
            "truncation order {order} is below the readout degree {}",
            readout.degree
        )));
    }
    let n = rescaled.dim();
    readout.check_dim(n)?;
    let mut blocks = LiftedState::zeros(n, order)?;
    for (key, c) in &rescaled.c_coeffs {
        let k: usize = key.iter().sum();
        let slot = MultiIndexCodec::new(n, k).canonical_index(key)?;
        blocks.block_mut(k)[slot] = *c;
    }
    Ok(blocks)
}
