//! Finite symmetric forms as dense matrices.
//!
//! A form is stored as the matrix `A` with `E(f, g) = fᵀ A g`. For a form
//! assembled from a [`Network`] this is the graph Laplacian plus the killing
//! diagonal: `A[x][y] = -c(x, y)` off the diagonal and
//! `A[x][x] = Σ_y c(x, y) + κ(x)`.

use std::fmt::Write as _;
use std::ops::Deref;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::fmt17;
use crate::network::Network;

/// Default relative tolerance for Markov and symmetry diagnostics.
pub const DEFAULT_TOL: f64 = 1e-10;

/// A real function on the vertex set, indexed by vertex position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FunctionOnV(Vec<f64>);

impl FunctionOnV {
    pub fn new(values: Vec<f64>) -> Self {
        FunctionOnV(values)
    }

    pub fn constant(n: usize, c: f64) -> Self {
        FunctionOnV(vec![c; n])
    }

    pub fn indicator(n: usize, x: usize) -> Self {
        let mut v = vec![0.0; n];
        v[x] = 1.0;
        FunctionOnV(v)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Pointwise product.
    pub fn mul(&self, other: &FunctionOnV) -> FunctionOnV {
        FunctionOnV(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FunctionOnV {
        FunctionOnV(self.0.iter().map(|&v| f(v)).collect())
    }

    /// Values at the given indices, in order.
    pub fn restrict(&self, indices: &[usize]) -> FunctionOnV {
        FunctionOnV(indices.iter().map(|&i| self.0[i]).collect())
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Parses values separated by commas, whitespace or newlines.
    pub fn from_csv(text: &str) -> Result<Self> {
        text.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad value {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(FunctionOnV)
    }

    pub fn to_csv(&self) -> String {
        self.0.iter().map(|&v| fmt17(v) + "\n").collect()
    }
}

impl Deref for FunctionOnV {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for FunctionOnV {
    fn from(v: Vec<f64>) -> Self {
        FunctionOnV(v)
    }
}

/// Nonnegative weights on an enumerated finite set.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    weights: Vec<f64>,
    total: f64,
}

#[derive(Deserialize)]
struct RawMeasure {
    weights: Vec<f64>,
}

impl AtomicMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        for (x, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidMeasure(format!("weight {w} at point {x}")));
            }
        }
        // Sequential sum in index order; pushforwards reuse the same order.
        let total = weights.iter().sum();
        Ok(AtomicMeasure { weights, total })
    }

    /// Counting measure on `n` points.
    pub fn counting(n: usize) -> Self {
        AtomicMeasure::new(vec![1.0; n]).expect("unit weights are valid")
    }

    /// Accepts `{"weights":[...]}` or a bare array.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| crate::network::json_error(text, &e))?;
        let weights: Vec<f64> = if value.is_array() {
            serde_json::from_value(value)
        } else {
            serde_json::from_value::<RawMeasure>(value).map(|r| r.weights)
        }
        .map_err(|e| Error::Parse(e.to_string()))?;
        AtomicMeasure::new(weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn everywhere_positive(&self) -> bool {
        self.weights.iter().all(|&w| w > 0.0)
    }
}

/// A symmetric matrix realizing a bilinear form. Symmetry is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct FormMatrix {
    m: DMatrix<f64>,
}

impl FormMatrix {
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        let n = m.nrows();
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)];
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("entry ({i}, {j})")));
                }
                if j > i && v != m[(j, i)] {
                    return Err(Error::NotSymmetric { row: i, col: j, value: v, mirror: m[(j, i)] });
                }
            }
        }
        Ok(FormMatrix { m })
    }

    /// Symmetrizes by averaging with the transpose before validating.
    pub(crate) fn from_matrix_symmetrized(mut m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows().min(m.ncols());
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = avg;
                m[(j, i)] = avg;
            }
        }
        Self::from_matrix(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::NotSquare { rows: n, cols: bad.len() });
        }
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn zeros(n: usize) -> Self {
        FormMatrix { m: DMatrix::zeros(n, n) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// `max |A_ij|`, the reference magnitude for relative tolerances.
    pub fn scale(&self) -> f64 {
        self.m.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.m.row(i).iter().copied().collect()).collect()
    }

    /// Conductance `c(x, y) = -A[x][y]` for `x != y`.
    pub fn conductance(&self, x: usize, y: usize) -> f64 {
        -self.m[(x, y)]
    }

    /// Row sums, i.e. the killing weights of a Markov form.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.m.row(i).iter().sum()).collect()
    }

    /// Principal submatrix on `idx` (in the given order).
    pub fn principal(&self, idx: &[usize]) -> FormMatrix {
        FormMatrix { m: self.m.select_rows(idx).select_columns(idx) }
    }

    /// Adjacency of the support graph (nonzero off-diagonals).
    pub fn neighbors(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim()).filter(move |&y| y != x && self.m[(x, y)] != 0.0)
    }

    /// Connected components of the support graph.
    pub fn components(&self) -> Vec<Vec<usize>> {
        crate::linalg::components(self.dim(), |x| self.neighbors(x).collect::<Vec<_>>())
    }

    /// Row-major CSV of the full matrix.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.dim() {
            let row: Vec<String> = self.m.row(i).iter().map(|&v| fmt17(v)).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::Parse(format!("bad value {t:?}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(&rows)
    }
}

/// Builds the form matrix of a network.
///
/// Diagonal entries are computed as the sum of the off-diagonal magnitudes in
/// ascending column order plus the killing weight, the same arithmetic that
/// [`crate::beurling_deny::recompose`] uses.
pub fn assemble(net: &Network) -> FormMatrix {
    let n = net.len();
    let mut m = DMatrix::zeros(n, n);
    for e in net.edges() {
        m[(e.u, e.v)] = -e.c;
        m[(e.v, e.u)] = -e.c;
    }
    for x in 0..n {
        m[(x, x)] = diagonal_entry(|y| -m[(x, y)], x, n, net.killing()[x]);
    }
    FormMatrix { m }
}

/// `Σ_{y != x} conductance(y)` in ascending `y`, then `+ killing`.
pub(crate) fn diagonal_entry(conductance: impl Fn(usize) -> f64, x: usize, n: usize, killing: f64) -> f64 {
    let mut s = 0.0;
    for y in (0..n).filter(|&y| y != x) {
        s += conductance(y);
    }
    s + killing
}

fn check_dim(a: &FormMatrix, f: &[f64]) -> Result<()> {
    if f.len() != a.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: f.len() });
    }
    Ok(())
}

/// `E(f, g) = fᵀ A g`.
pub fn evaluate(a: &FormMatrix, f: &[f64], g: &[f64]) -> Result<f64> {
    check_dim(a, f)?;
    check_dim(a, g)?;
    let n = a.dim();
    let mut total = 0.0;
    for i in 0..n {
        if f[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in 0..n {
            row += a.m[(i, j)] * g[j];
        }
        total += f[i] * row;
    }
    Ok(total)
}

/// `E(f, f)`.
pub fn energy(a: &FormMatrix, f: &[f64]) -> Result<f64> {
    evaluate(a, f, f)
}

/// Componentwise clamp to `[0, 1]`.
pub fn unit_contraction(u: &[f64]) -> FunctionOnV {
    FunctionOnV(u.iter().map(|&v| v.clamp(0.0, 1.0)).collect())
}

/// Componentwise `min(u, 1)`.
pub fn truncate_one(u: &[f64]) -> FunctionOnV {
    FunctionOnV(u.iter().map(|&v| v.min(1.0)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkovViolation {
    PositiveOffDiagonal { row: usize, col: usize, value: f64 },
    NegativeRowSum { row: usize, sum: f64 },
}

impl std::fmt::Display for MarkovViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MarkovViolation::PositiveOffDiagonal { row, col, value } => {
                write!(f, "off-diagonal entry ({row}, {col}) = {value} is positive")
            }
            MarkovViolation::NegativeRowSum { row, sum } => {
                write!(f, "row {row} sums to {sum} < 0")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovReport {
    pub markov: bool,
    pub violations: Vec<MarkovViolation>,
}

/// Checks the sign conditions of a Markov form. `tol` is relative to
/// `max |A|`: off-diagonals may exceed zero and row sums may fall below zero
/// by at most `tol * max|A|`.
pub fn is_markov(a: &FormMatrix, tol: f64) -> MarkovReport {
    let eps = tol * a.scale();
    let n = a.dim();
    let mut violations = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && a.m[(i, j)] > eps {
                violations.push(MarkovViolation::PositiveOffDiagonal { row: i, col: j, value: a.m[(i, j)] });
            }
        }
        let sum: f64 = a.m.row(i).iter().sum();
        if sum < -eps {
            violations.push(MarkovViolation::NegativeRowSum { row: i, sum });
        }
    }
    MarkovReport { markov: violations.is_empty(), violations }
}

/// Errors with the first violation unless `a` is Markov at the default tolerance.
pub fn require_markov(a: &FormMatrix) -> Result<()> {
    let report = is_markov(a, DEFAULT_TOL);
    match report.violations.first() {
        None => Ok(()),
        Some(v) => Err(Error::NotMarkov(v.to_string())),
    }
}
