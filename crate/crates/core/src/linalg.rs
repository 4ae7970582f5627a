//! Dense linear-algebra helpers shared by the trace, resistance and
//! simulation code.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Reciprocal condition estimates below this are treated as singular.
pub const RCOND_THRESHOLD: f64 = 1e-13;

/// Cholesky factorization of a symmetric positive definite block, with a
/// cheap reciprocal condition estimate taken from the factor diagonal.
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    rcond: f64,
}

impl SpdFactor {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 {
            let chol = Cholesky::new(m).expect("empty matrix factors");
            return Ok(SpdFactor { chol, rcond: 1.0 });
        }
        let chol = Cholesky::new(m).ok_or(Error::IllConditioned { rcond: 0.0 })?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        let rcond = if hi > 0.0 { (lo / hi).powi(2) } else { 0.0 };
        if !(rcond >= RCOND_THRESHOLD) {
            return Err(Error::IllConditioned { rcond });
        }
        Ok(SpdFactor { chol, rcond })
    }

    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Connected components of the graph on `0..n` given by `neighbors`; each
/// component is sorted and components are ordered by smallest member.
pub fn components<F, I>(n: usize, neighbors: F) -> Vec<Vec<usize>>
where
    F: Fn(usize) -> I,
    I: IntoIterator<Item = usize>,
{
    let mut label = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![start];
        label[start] = id;
        let mut stack = vec![start];
        while let Some(x) = stack.pop() {
            for y in neighbors(x) {
                if label[y] == usize::MAX {
                    label[y] = id;
                    members.push(y);
                    stack.push(y);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Pairwise (cascade) summation in fixed order; the result depends only on
/// the slice contents, never on how it was produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Symmetrizes `m` and removes rounding residue below `eps`: positive
/// off-diagonal entries and negative row sums. A full-row cancellation (the
/// trace of a killing-free component onto one vertex) thus yields exact zeros.
pub(crate) fn snap_to_markov(m: &mut DMatrix<f64>, eps: f64) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let mut avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            if avg > 0.0 && avg <= eps {
                avg = 0.0;
            }
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    for i in 0..n {
        let sum: f64 = m.row(i).iter().sum();
        if sum < 0.0 && sum >= -eps {
            m[(i, i)] -= sum;
        }
    }
}
