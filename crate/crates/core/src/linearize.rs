//! The lifted state `Psi_j = exp(i x)^{(x) j}` and the matrix-free generator
//! of the truncated linear system.
//!
//! Blocks are indexed from 1. Within block `j` entries follow the tensor
//! enumeration of [`MultiIndexCodec`](crate::problem::MultiIndexCodec): the
//! leftmost tensor factor is the most significant base-n digit.

use nalgebra::{DMatrix, DVector};

use crate::norms::{dual_exponent, row_q_norm};
use crate::problem::RescaledProblem;
use crate::{Error, Result, C64};

/// Default cap on the dimension of densely assembled operators.
pub const DEFAULT_DENSE_BUDGET: usize = 4096;
/// Cap on the total number of entries of a lifted state (256 MiB).
pub const STATE_BUDGET: usize = 1 << 24;

/// Dense-assembly cap, overridable through `CFL_DENSE_BUDGET`.
pub fn dense_budget() -> usize {
    std::env::var("CFL_DENSE_BUDGET")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_DENSE_BUDGET)
}

/// `sum_{j=1..order} n^j`, or `None` on overflow.
pub fn lifted_len(n: usize, order: usize) -> Option<usize> {
    let mut total: usize = 0;
    let mut block: usize = 1;
    for _ in 0..order {
        block = block.checked_mul(n)?;
        total = total.checked_add(block)?;
    }
    Some(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedState {
    n: usize,
    blocks: Vec<Vec<C64>>,
}

impl LiftedState {
    pub fn zeros(n: usize, order: usize) -> Result<Self> {
        if n == 0 || order == 0 {
            return Err(Error::invalid("lifted state needs n >= 1 and N >= 1"));
        }
        let size = lifted_len(n, order).unwrap_or(usize::MAX);
        if size > STATE_BUDGET {
            return Err(Error::StateBudget {
                size,
                budget: STATE_BUDGET,
            });
        }
        let blocks = (1..=order)
            .map(|j| vec![C64::new(0.0, 0.0); n.pow(j as u32)])
            .collect();
        Ok(Self { n, blocks })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.blocks.len()
    }

    pub fn total_len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Block `j`, counting from 1.
    pub fn block(&self, j: usize) -> &[C64] {
        &self.blocks[j - 1]
    }

    pub fn block_mut(&mut self, j: usize) -> &mut [C64] {
        &mut self.blocks[j - 1]
    }

    pub fn blocks(&self) -> &[Vec<C64>] {
        &self.blocks
    }

    pub fn flatten(&self) -> DVector<C64> {
        DVector::from_iterator(self.total_len(), self.blocks.iter().flatten().copied())
    }

    pub fn from_flat(n: usize, order: usize, flat: &[C64]) -> Result<Self> {
        let mut out = Self::zeros(n, order)?;
        if flat.len() != out.total_len() {
            return Err(Error::Shape {
                what: "flattened lifted state",
                expected: out.total_len(),
                got: flat.len(),
            });
        }
        let mut at = 0;
        for b in &mut out.blocks {
            let len = b.len();
            b.copy_from_slice(&flat[at..at + len]);
            at += len;
        }
        Ok(out)
    }

    /// Bilinear pairing `sum_j c_j . psi_j` (no conjugation).
    pub fn dot(&self, other: &LiftedState) -> C64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .flat_map(|(a, b)| a.iter().zip(b))
            .map(|(a, b)| a * b)
            .sum()
    }

    /// p-norm of the stacked vector.
    pub fn norm_p(&self, p: f64) -> f64 {
        crate::norms::p_norm_unchecked(self.blocks.iter().flatten().map(|z| z.norm()), p)
    }

    pub fn block_norm(&self, j: usize, p: f64) -> f64 {
        crate::norms::p_norm_unchecked(self.block(j).iter().map(|z| z.norm()), p)
    }

    pub fn is_finite(&self) -> bool {
        self.blocks
            .iter()
            .flatten()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: C64, other: &LiftedState) {
        for (x, y) in self.blocks.iter_mut().zip(&other.blocks) {
            for (xi, yi) in x.iter_mut().zip(y) {
                *xi += a * yi;
            }
        }
    }

    pub fn sub(&self, other: &LiftedState) -> LiftedState {
        let mut out = self.clone();
        out.axpy(C64::new(-1.0, 0.0), other);
        out
    }

    fn check_same_shape(&self, other: &LiftedState) -> Result<()> {
        if self.n != other.n || self.order() != other.order() {
            return Err(Error::Shape {
                what: "lifted state",
                expected: self.total_len(),
                got: other.total_len(),
            });
        }
        Ok(())
    }

    /// Embeds the state into the zero-padded layout of length `N n^N`, where
    /// block `j` is prefixed by `N - j` copies of the first basis vector.
    pub fn to_padded(&self) -> Vec<C64> {
        let order = self.order();
        let stride = self.n.pow(order as u32);
        let mut out = vec![C64::new(0.0, 0.0); order * stride];
        for j in 1..=order {
            for (idx, v) in self.block(j).iter().enumerate() {
                out[padded_index(self.n, order, j, idx)] = *v;
            }
        }
        out
    }
}

/// Position of entry `idx` of block `j` in the zero-padded layout.
pub fn padded_index(n: usize, order: usize, j: usize, idx: usize) -> usize {
    (j - 1) * n.pow(order as u32) + idx
}

/// `Psi_j(0) = w0^{(x) j}` for `j = 1..order`.
pub fn lift_initial(rescaled: &RescaledProblem, order: usize) -> Result<LiftedState> {
    lift_vector(rescaled.w0.as_slice(), order)
}

/// Tensor powers of an arbitrary vector `w`.
pub fn lift_vector(w: &[C64], order: usize) -> Result<LiftedState> {
    let n = w.len();
    let mut state = LiftedState::zeros(n, order)?;
    state.blocks[0].copy_from_slice(w);
    for j in 1..order {
        let (done, rest) = state.blocks.split_at_mut(j);
        let prev = &done[j - 1];
        for (prefix, pv) in prev.iter().enumerate() {
            for (d, wd) in w.iter().enumerate() {
                rest[0][prefix * n + d] = pv * wd;
            }
        }
    }
    Ok(state)
}

/// `i (count(l) . F0)` for every tensor index `l` of block `j`.
fn b0_diagonal(j: usize, f0: &[C64]) -> Vec<C64> {
    let n = f0.len();
    let mut diag = vec![C64::new(0.0, 0.0)];
    for _ in 0..j {
        let mut next = Vec::with_capacity(diag.len() * n);
        for d in &diag {
            for f in f0 {
                next.push(d + C64::i() * f);
            }
        }
        diag = next;
    }
    diag
}

/// `B_j^{(0)} v`: elementwise scaling by `i (count(l) . F0)`.
pub fn apply_b0(j: usize, f0: &[C64], v: &[C64]) -> Result<Vec<C64>> {
    let n = f0.len();
    let want = n.pow(j as u32);
    if v.len() != want {
        return Err(Error::Shape {
            what: "B0 input",
            expected: want,
            got: v.len(),
        });
    }
    Ok(b0_diagonal(j, f0).iter().zip(v).map(|(d, x)| d * x).collect())
}

/// `B_{j+1}^{(1)} v`, mapping a vector of length `n^{j+1}` to length `n^j`.
pub fn apply_b1(j: usize, f1: &DMatrix<C64>, v: &[C64]) -> Result<Vec<C64>> {
    let n = f1.nrows();
    let want = n.pow(j as u32 + 1);
    if v.len() != want {
        return Err(Error::Shape {
            what: "B1 input",
            expected: want,
            got: v.len(),
        });
    }
    let i_f1 = row_major(&f1.map(|z| C64::i() * z));
    let mut out = vec![C64::new(0.0, 0.0); n.pow(j as u32)];
    b1_accumulate(n, j, &i_f1, v, &mut out);
    Ok(out)
}

fn row_major(a: &DMatrix<C64>) -> Vec<C64> {
    a.transpose().as_slice().to_vec()
}

/// Adds `B_{j+1}^{(1)} v` to `out`; `i_f1` is `i F1` stored row-major.
///
/// For each of the `j` insertion positions the output digit `r` at that
/// position is coupled to the input digit pair `(r, b)` with weight `i F1[r, b]`.
fn b1_accumulate(n: usize, j: usize, i_f1: &[C64], v: &[C64], out: &mut [C64]) {
    for pos in 0..j {
        let left = n.pow(pos as u32);
        let right = n.pow((j - 1 - pos) as u32);
        for l in 0..left {
            for r in 0..n {
                let o_base = (l * n + r) * right;
                let dst = &mut out[o_base..o_base + right];
                for b in 0..n {
                    let coef = i_f1[r * n + b];
                    if coef == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let i_base = ((l * n + r) * n + b) * right;
                    for (o, x) in dst.iter_mut().zip(&v[i_base..i_base + right]) {
                        *o += coef * x;
                    }
                }
            }
        }
    }
}

/// Matrix-free truncated generator `L_N`.
#[derive(Debug, Clone)]
pub struct LinearOperatorLN {
    n: usize,
    order: usize,
    f0: DVector<C64>,
    f1: DMatrix<C64>,
    i_f1: Vec<C64>,
    diagonals: Vec<Vec<C64>>,
}

impl LinearOperatorLN {
    pub fn new(rescaled: &RescaledProblem, order: usize) -> Result<Self> {
        Self::from_parts(rescaled.f0.clone(), rescaled.f1.clone(), order)
    }

    pub fn from_parts(f0: DVector<C64>, f1: DMatrix<C64>, order: usize) -> Result<Self> {
        let n = f0.len();
        if n == 0 || order == 0 {
            return Err(Error::invalid("operator needs n >= 1 and N >= 1"));
        }
        if f1.nrows() != n || f1.ncols() != n {
            return Err(Error::invalid(format!("F1 must be {n}x{n}")));
        }
        let size = lifted_len(n, order).unwrap_or(usize::MAX);
        if size > STATE_BUDGET {
            return Err(Error::StateBudget {
                size,
                budget: STATE_BUDGET,
            });
        }
        let diagonals = (1..=order).map(|j| b0_diagonal(j, f0.as_slice())).collect();
        let i_f1 = row_major(&f1.map(|z| C64::i() * z));
        Ok(Self {
            n,
            order,
            f0,
            f1,
            i_f1,
            diagonals,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn f0(&self) -> &DVector<C64> {
        &self.f0
    }

    pub fn f1(&self) -> &DMatrix<C64> {
        &self.f1
    }

    pub fn total_len(&self) -> usize {
        self.diagonals.iter().map(Vec::len).sum()
    }

    /// `min_j Im (F0)_j`.
    pub fn mu0(&self) -> f64 {
        self.f0.iter().map(|z| z.im).fold(f64::INFINITY, f64::min)
    }

    /// `N (|F0|_inf + |F1|_row,q)`, an upper bound on `|L_N|_p`.
    pub fn norm_bound(&self, p: f64) -> Result<f64> {
        let f0_inf = self.f0.iter().map(|z| z.norm()).fold(0.0, f64::max);
        Ok(self.order as f64 * (f0_inf + row_q_norm(&self.f1, dual_exponent(p))?))
    }

    fn check(&self, state: &LiftedState) -> Result<()> {
        if state.n != self.n || state.order() != self.order {
            return Err(Error::Shape {
                what: "lifted state for this operator",
                expected: self.total_len(),
                got: state.total_len(),
            });
        }
        Ok(())
    }

    /// Writes `L_N v` into `out` without allocating.
    pub fn apply_into(&self, v: &LiftedState, out: &mut LiftedState) -> Result<()> {
        self.check(v)?;
        v.check_same_shape(out)?;
        for j in 1..=self.order {
            let dst = &mut out.blocks[j - 1];
            for ((o, d), x) in dst.iter_mut().zip(&self.diagonals[j - 1]).zip(&v.blocks[j - 1]) {
                *o = d * x;
            }
            if j < self.order {
                b1_accumulate(self.n, j, &self.i_f1, &v.blocks[j], dst);
            }
        }
        Ok(())
    }
}

pub fn apply_ln(op: &LinearOperatorLN, state: &LiftedState) -> Result<LiftedState> {
    let mut out = LiftedState::zeros(op.n, op.order)?;
    op.apply_into(state, &mut out)?;
    Ok(out)
}

fn check_dense(size: usize) -> Result<()> {
    let budget = dense_budget();
    if size > budget {
        return Err(Error::DenseBudget { size, budget });
    }
    Ok(())
}

/// Explicit matrix of `L_N` in the unpadded block layout.
pub fn dense_ln(op: &LinearOperatorLN) -> Result<DMatrix<C64>> {
    let size = op.total_len();
    check_dense(size)?;
    let n = op.n;
    let mut offsets = vec![0; op.order + 1];
    for j in 1..=op.order {
        offsets[j] = offsets[j - 1] + n.pow(j as u32);
    }
    let mut a = DMatrix::<C64>::zeros(size, size);
    for j in 1..=op.order {
        let row0 = offsets[j - 1];
        for (idx, d) in op.diagonals[j - 1].iter().enumerate() {
            a[(row0 + idx, row0 + idx)] = *d;
        }
        if j == op.order {
            continue;
        }
        let col0 = offsets[j];
        for pos in 0..j {
            let left = n.pow(pos as u32);
            let right = n.pow((j - 1 - pos) as u32);
            for l in 0..left {
                for r in 0..n {
                    for b in 0..n {
                        let coef = op.i_f1[r * n + b];
                        for rr in 0..right {
                            let o = (l * n + r) * right + rr;
                            let i = ((l * n + r) * n + b) * right + rr;
                            a[(row0 + o, col0 + i)] += coef;
                        }
                    }
                }
            }
        }
    }
    Ok(a)
}

/// The `n x n^2` matrix whose row `r` holds row `r` of `F1` in the columns
/// `(r, .)`, so that `F1tilde (w (x) w) = (F1 w) * w` elementwise.
pub fn f1_tilde(f1: &DMatrix<C64>) -> DMatrix<C64> {
    let n = f1.nrows();
    let mut out = DMatrix::zeros(n, n * n);
    for r in 0..n {
        for b in 0..n {
            out[(r, r * n + b)] = f1[(r, b)];
        }
    }
    out
}
