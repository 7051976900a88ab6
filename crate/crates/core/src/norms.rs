//! Vector and matrix norms, the logarithmic 2-norm, a dense matrix
//! exponential and the growth quantities built from them.
//!
//! Exponents are plain `f64` values in `[1, inf]`; `f64::INFINITY` stands for
//! the max-norm.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// A norm exponent together with its conjugate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormKind {
    pub p: f64,
}

impl NormKind {
    pub fn new(p: f64) -> Result<Self> {
        check_exponent(p)?;
        Ok(Self { p })
    }

    /// The conjugate exponent `q` with `1/p + 1/q = 1`.
    pub fn dual(self) -> f64 {
        dual_exponent(self.p)
    }
}

pub fn dual_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::invalid(format!("norm exponent must be >= 1, got {p}")));
    }
    Ok(())
}

pub fn vector_p_norm(a: &[C64], p: f64) -> Result<f64> {
    check_exponent(p)?;
    if a.is_empty() {
        return Err(Error::invalid("norm of an empty vector"));
    }
    Ok(p_norm_unchecked(a.iter().map(|z| z.norm()), p))
}

/// p-norm of a sequence of non-negative magnitudes. Scaled by the largest
/// entry so large exponents do not overflow.
pub(crate) fn p_norm_unchecked(mags: impl Iterator<Item = f64> + Clone, p: f64) -> f64 {
    if p.is_infinite() {
        return mags.fold(0.0, f64::max);
    }
    if p == 1.0 {
        return mags.sum();
    }
    if p == 2.0 {
        return mags.map(|x| x * x).sum::<f64>().sqrt();
    }
    let top = mags.clone().fold(0.0, f64::max);
    if top == 0.0 {
        return 0.0;
    }
    top * mags.map(|x| (x / top).powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Maximum over rows of the q-norm of each row.
pub fn row_q_norm(a: &DMatrix<C64>, q: f64) -> Result<f64> {
    check_exponent(q)?;
    if a.is_empty() {
        return Err(Error::invalid("row norm of an empty matrix"));
    }
    Ok((0..a.nrows())
        .map(|r| {
            p_norm_unchecked(
                a.row(r).iter().map(|z| z.norm()).collect::<Vec<_>>().into_iter(),
                q,
            )
        })
        .fold(0.0, f64::max))
}

/// Induced operator norm for `p = 1` (max column sum) or `p = 2` (largest
/// singular value).
pub fn op_norm(a: &DMatrix<C64>, p: f64) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::invalid("operator norm of an empty matrix"));
    }
    if p == 1.0 {
        Ok(norm_1(a))
    } else if p == 2.0 {
        Ok(a.clone().singular_values().max())
    } else {
        Err(Error::invalid(format!(
            "operator norm is evaluated exactly only for p = 1 or 2, got {p}"
        )))
    }
}

pub(crate) fn norm_1(a: &DMatrix<C64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub(crate) fn norm_inf(a: &DMatrix<C64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Cheap upper bound on the spectral norm: `sqrt(|A|_1 |A|_inf)`.
pub fn norm_2_upper(a: &DMatrix<C64>) -> f64 {
    (norm_1(a) * norm_inf(a)).sqrt()
}

/// Largest eigenvalue of the Hermitian part `(A + A^H)/2`.
pub fn log_norm_2(a: &DMatrix<C64>) -> Result<f64> {
    if !a.is_square() || a.is_empty() {
        return Err(Error::invalid("logarithmic norm needs a non-empty square matrix"));
    }
    let herm = (a + a.adjoint()).scale(0.5);
    Ok(herm.symmetric_eigenvalues().max())
}

/// Largest spectral norm accepted by [`matrix_exp`].
pub const EXP_NORM_LIMIT: f64 = 50.0;
/// Largest dimension accepted by [`matrix_exp`].
pub const EXP_DIM_LIMIT: usize = 10_000;

/// Dense matrix exponential: scaling and squaring around a degree-18 Taylor
/// polynomial evaluated by Paterson-Stockmeyer. Complex products are carried
/// out as four real products so the optimized real kernels do the work.
pub fn matrix_exp(a: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    if !a.is_square() {
        return Err(Error::invalid("matrix exponential of a non-square matrix"));
    }
    let n = a.nrows();
    if n > EXP_DIM_LIMIT {
        return Err(Error::DenseBudget {
            size: n,
            budget: EXP_DIM_LIMIT,
        });
    }
    if n == 0 {
        return Ok(a.clone());
    }
    if norm_2_upper(a) > EXP_NORM_LIMIT {
        let exact = op_norm(a, 2.0)?;
        if exact > EXP_NORM_LIMIT {
            return Err(Error::invalid(format!(
                "matrix exponential needs |A|_2 <= {EXP_NORM_LIMIT}, got {exact:.3e}"
            )));
        }
    }
    Ok(exp_unchecked(a))
}

/// `exp(A t)` for any `t`, squaring past the norm limit of [`matrix_exp`].
pub fn exp_at(a: &DMatrix<C64>, t: f64) -> Result<DMatrix<C64>> {
    if !a.is_square() {
        return Err(Error::invalid("matrix exponential of a non-square matrix"));
    }
    if a.nrows() > EXP_DIM_LIMIT {
        return Err(Error::DenseBudget {
            size: a.nrows(),
            budget: EXP_DIM_LIMIT,
        });
    }
    Ok(exp_unchecked(&a.scale(t)))
}

const TAYLOR_DEGREE: usize = 18;

fn exp_unchecked(a: &DMatrix<C64>) -> DMatrix<C64> {
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    // With |B| <= 1 the series tail past degree 18 is below e/19! ~ 2e-17.
    let size = norm_1(a).min(norm_inf(a));
    let squarings = if size > 1.0 { size.log2().ceil() as i32 } else { 0 };
    let b = Split::from_complex(&a.scale(0.5f64.powi(squarings)));

    let mut coef = [0.0; TAYLOR_DEGREE + 1];
    coef[0] = 1.0;
    for j in 1..=TAYLOR_DEGREE {
        coef[j] = coef[j - 1] / j as f64;
    }

    // Powers B^0..B^4 and Horner in B^4 over chunks of four coefficients.
    let b2 = b.mul(&b);
    let b3 = b2.mul(&b);
    let b4 = b3.mul(&b);
    let powers = [None, Some(&b), Some(&b2), Some(&b3)];
    let chunk = |r: usize| {
        let mut acc = Split::zeros(n);
        for (i, pw) in powers.iter().enumerate() {
            let j = 4 * r + i;
            if j > TAYLOR_DEGREE {
                break;
            }
            match pw {
                None => acc.add_diag(coef[j]),
                Some(m) => acc.axpy(coef[j], m),
            }
        }
        acc
    };
    let top = TAYLOR_DEGREE / 4;
    let mut acc = chunk(top);
    for r in (0..top).rev() {
        acc = acc.mul(&b4);
        acc.add(&chunk(r));
    }
    for _ in 0..squarings {
        acc = acc.mul(&acc);
    }
    acc.to_complex()
}

/// A complex matrix stored as separate real and imaginary parts.
struct Split {
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

impl Split {
    fn zeros(n: usize) -> Self {
        Self {
            re: DMatrix::zeros(n, n),
            im: DMatrix::zeros(n, n),
        }
    }

    fn from_complex(a: &DMatrix<C64>) -> Self {
        Self {
            re: a.map(|z| z.re),
            im: a.map(|z| z.im),
        }
    }

    fn to_complex(&self) -> DMatrix<C64> {
        self.re.zip_map(&self.im, C64::new)
    }

    fn mul(&self, o: &Split) -> Split {
        let mut re = &self.re * &o.re;
        re.gemm(-1.0, &self.im, &o.im, 1.0);
        let mut im = &self.re * &o.im;
        im.gemm(1.0, &self.im, &o.re, 1.0);
        Split { re, im }
    }

    fn axpy(&mut self, c: f64, o: &Split) {
        self.re.zip_apply(&o.re, |a, b| *a += c * b);
        self.im.zip_apply(&o.im, |a, b| *a += c * b);
    }

    fn add(&mut self, o: &Split) {
        self.re += &o.re;
        self.im += &o.im;
    }

    fn add_diag(&mut self, c: f64) {
        for i in 0..self.re.nrows() {
            self.re[(i, i)] += c;
        }
    }
}

/// Sampled estimate of `sup_{t in [0, T]} |exp(A t)|_2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthEnvelope {
    pub horizon: f64,
    pub samples: Vec<(f64, f64)>,
    /// Largest sampled norm; a lower estimate of the true supremum.
    pub c_estimate: f64,
    pub mu2: f64,
    /// `exp(max(mu2, 0) T)`, a certified upper bound.
    pub envelope: f64,
    /// Analytic growth bound supplied by the caller, when one applies.
    pub gamma_bound: Option<f64>,
}

impl GrowthEnvelope {
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma_bound = Some(gamma);
        self
    }
}

/// Samples `|exp(A t)|_2` on a uniform grid of `grid_points` over `[0, T]`,
/// then refines once around the largest sample.
pub fn growth_envelope(a: &DMatrix<C64>, horizon: f64, grid_points: usize) -> Result<GrowthEnvelope> {
    if grid_points < 2 {
        return Err(Error::invalid("growth envelope needs at least two grid points"));
    }
    if !(horizon >= 0.0) {
        return Err(Error::invalid("growth envelope horizon must be non-negative"));
    }
    let mu2 = log_norm_2(a)?;
    let dt = horizon / (grid_points - 1) as f64;
    let step = exp_at(a, dt)?;
    let mut samples = Vec::with_capacity(grid_points + 8);
    let mut e = DMatrix::<C64>::identity(a.nrows(), a.ncols());
    for i in 0..grid_points {
        if i > 0 {
            e = &e * &step;
        }
        samples.push((i as f64 * dt, op_norm(&e, 2.0)?));
    }
    let (imax, _) = samples.iter().enumerate().fold(
        (0, f64::MIN),
        |acc, (i, s)| if s.1 > acc.1 { (i, s.1) } else { acc },
    );
    if imax > 0 && horizon > 0.0 {
        let lo = samples[imax - 1].0;
        let hi = samples[(imax + 1).min(grid_points - 1)].0;
        for j in 1..8 {
            let t = lo + (hi - lo) * j as f64 / 8.0;
            samples.push((t, op_norm(&exp_at(a, t)?, 2.0)?));
        }
        samples.sort_by(|x, y| x.0.total_cmp(&y.0));
    }
    let c_estimate = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    Ok(GrowthEnvelope {
        horizon,
        samples,
        c_estimate,
        mu2,
        envelope: (mu2.max(0.0) * horizon).exp(),
        gamma_bound: None,
    })
}

/// `exp(T (N nu |G1|_row,q + max{-mu0, -N mu0}))`.
pub fn gamma_growth_bound(order: usize, horizon: f64, nu: f64, g1_row_q: f64, mu0: f64) -> f64 {
    let nf = order as f64;
    (horizon * (nf * nu * g1_row_q + (-mu0).max(-nf * mu0))).exp()
}
