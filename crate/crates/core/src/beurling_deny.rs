//! Discrete Beurling-Deny representation: a Markov form matrix split into a
//! symmetric jump kernel and a killing vector.
//!
//! The jump kernel lives on *ordered* pairs, so the double sum
//! `Σ_{x≠y} J(x,y)(f(x)-f(y))(g(x)-g(y))` visits every edge twice and
//! `J(x, y) = c(x, y) / 2`. Getting this factor wrong doubles every energy.
//!
//! There is no strongly local part on a finite discrete set: every function is
//! locally constant around each point, so that component is the zero form.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::{diagonal_entry, require_markov, FormMatrix, DEFAULT_TOL};

/// Strongly local component of the decomposition. Always zero here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LocalPart {
    #[default]
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpKillingDecomposition {
    jump: DMatrix<f64>,
    kappa: Vec<f64>,
    local_part: LocalPart,
}

#[derive(Serialize, Deserialize)]
struct JumpEntry {
    x: usize,
    y: usize,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct DecompositionJson {
    #[serde(rename = "J")]
    jump: Vec<JumpEntry>,
    kappa: Vec<f64>,
}

impl JumpKillingDecomposition {
    /// Builds from explicit parts, validating symmetry and signs.
    pub fn new(jump: DMatrix<f64>, kappa: Vec<f64>) -> Result<Self> {
        let n = kappa.len();
        if jump.nrows() != n || jump.ncols() != n {
            return Err(Error::InvalidDecomposition(format!(
                "jump kernel is {}x{} but kappa has {n} entries",
                jump.nrows(),
                jump.ncols()
            )));
        }
        for x in 0..n {
            if jump[(x, x)] != 0.0 {
                return Err(Error::InvalidDecomposition(format!("J({x},{x}) must be zero")));
            }
            for y in 0..n {
                let v = jump[(x, y)];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidDecomposition(format!("J({x},{y}) = {v} is negative")));
                }
                if v != jump[(y, x)] {
                    return Err(Error::InvalidDecomposition(format!(
                        "J({x},{y}) = {v} differs from J({y},{x}) = {}",
                        jump[(y, x)]
                    )));
                }
            }
            if !(kappa[x] >= 0.0) || !kappa[x].is_finite() {
                return Err(Error::InvalidDecomposition(format!("kappa({x}) = {} is negative", kappa[x])));
            }
        }
        Ok(JumpKillingDecomposition { jump, kappa, local_part: LocalPart::Zero })
    }

    pub fn dim(&self) -> usize {
        self.kappa.len()
    }

    /// `J(x, y)` on ordered pairs.
    pub fn jump(&self, x: usize, y: usize) -> f64 {
        self.jump[(x, y)]
    }

    pub fn jump_kernel(&self) -> &DMatrix<f64> {
        &self.jump
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn local_part(&self) -> LocalPart {
        self.local_part
    }

    /// `Σ_{x≠y} J(x,y)(f(x)-f(y))(g(x)-g(y)) + Σ_x κ(x) f(x) g(x)`.
    pub fn evaluate(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        let n = self.dim();
        for len in [f.len(), g.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        let mut jump = 0.0;
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    jump += self.jump[(x, y)] * (f[x] - f[y]) * (g[x] - g[y]);
                }
            }
        }
        let killing: f64 = (0..n).map(|x| self.kappa[x] * f[x] * g[x]).sum();
        Ok(jump + killing)
    }

    /// `{"J":[{"x":i,"y":j,"value":v},...],"kappa":[...]}` listing every
    /// ordered pair with nonzero jump weight.
    pub fn to_json_value(&self) -> serde_json::Value {
        let n = self.dim();
        let mut jump = Vec::new();
        for x in 0..n {
            for y in 0..n {
                if x != y && self.jump[(x, y)] != 0.0 {
                    jump.push(JumpEntry { x, y, value: self.jump[(x, y)] });
                }
            }
        }
        serde_json::to_value(DecompositionJson { jump, kappa: self.kappa.clone() })
            .expect("decomposition serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: DecompositionJson =
            serde_json::from_str(text).map_err(|e| crate::network::json_error(text, &e))?;
        let n = raw.kappa.len();
        let mut jump = DMatrix::zeros(n, n);
        for e in raw.jump {
            if e.x >= n || e.y >= n {
                return Err(Error::InvalidDecomposition(format!("pair ({}, {}) out of range", e.x, e.y)));
            }
            jump[(e.x, e.y)] = e.value;
        }
        Self::new(jump, raw.kappa)
    }
}

/// Splits a Markov form into `J(x,y) = -A[x][y] / 2` and `κ(x) = Σ_y A[x][y]`.
///
/// Sign violations within the default tolerance are clamped to zero. The
/// killing weight is then adjusted by at most an ulp so that [`recompose`]
/// reproduces every diagonal entry bit for bit.
pub fn decompose(a: &FormMatrix) -> Result<JumpKillingDecomposition> {
    require_markov(a)?;
    let n = a.dim();
    let mut jump = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            if x != y {
                jump[(x, y)] = (-a.get(x, y) / 2.0).max(0.0);
            }
        }
    }
    let eps = DEFAULT_TOL * a.scale();
    let mut kappa = Vec::with_capacity(n);
    for x in 0..n {
        let d = diagonal_entry(|y| 2.0 * jump[(x, y)], x, n, 0.0);
        let target = a.get(x, x);
        let mut k = target - d;
        for _ in 0..8 {
            let r = d + k;
            if r == target {
                break;
            }
            k = if r < target { k.next_up() } else { k.next_down() };
        }
        if k < 0.0 {
            if k < -eps {
                return Err(Error::NotMarkov(format!("row {x} sums to {k} < 0")));
            }
            k = 0.0;
        }
        kappa.push(k);
    }
    JumpKillingDecomposition::new(jump, kappa)
}

/// Rebuilds the form matrix: `A[x][y] = -2 J(x,y)` and
/// `A[x][x] = Σ_{y≠x} 2 J(x,y) + κ(x)`.
pub fn recompose(d: &JumpKillingDecomposition) -> FormMatrix {
    let n = d.dim();
    let mut m = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            if x != y {
                m[(x, y)] = -2.0 * d.jump[(x, y)];
            }
        }
        m[(x, x)] = diagonal_entry(|y| 2.0 * d.jump[(x, y)], x, n, d.kappa[x]);
    }
    FormMatrix::from_matrix(m).expect("validated decomposition recomposes symmetrically")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> FormMatrix {
        FormMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn decompose_examples() {
        let a = m(&[&[2.0, -1.0], &[-1.0, 3.0]]);
        let d = decompose(&a).unwrap();
        assert_eq!((d.jump(0, 1), d.jump(1, 0)), (0.5, 0.5));
        assert_eq!(d.kappa(), &[1.0, 2.0]);
        assert_eq!(recompose(&d), a);
        assert_eq!(d.local_part(), LocalPart::Zero);

        let z = decompose(&FormMatrix::zeros(3)).unwrap();
        assert!(z.jump_kernel().iter().all(|&v| v == 0.0));
        assert_eq!(z.kappa(), &[0.0; 3]);

        let lap = decompose(&m(&[&[1.0, -1.0], &[-1.0, 1.0]])).unwrap();
        assert_eq!(lap.jump(0, 1), 0.5);
        assert_eq!(lap.kappa(), &[0.0, 0.0]);
    }

    #[test]
    fn coefficients_match_indicator_pairs() {
        // Expanding the bilinear identity on indicators: E(1_x, 1_y) = -2 J(x,y)
        // for x != y and E(1_x, 1_x) = Σ_y 2 J(x,y) + κ(x).
        let a = m(&[&[2.0, -1.0], &[-1.0, 3.0]]);
        let d = decompose(&a).unwrap();
        let e = [[1.0, 0.0], [0.0, 1.0]];
        for x in 0..2 {
            for y in 0..2 {
                assert_eq!(d.evaluate(&e[x], &e[y]).unwrap(), a.get(x, y));
            }
        }
    }

    #[test]
    fn recompose_examples() {
        let pure = JumpKillingDecomposition::new(DMatrix::zeros(2, 2), vec![1.0, 1.0]).unwrap();
        assert_eq!(recompose(&pure), m(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let j = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        let edge = JumpKillingDecomposition::new(j, vec![0.0, 0.0]).unwrap();
        assert_eq!(recompose(&edge), m(&[&[1.0, -1.0], &[-1.0, 1.0]]));
    }

    #[test]
    fn rejects_invalid() {
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.25, 0.0]);
        assert!(JumpKillingDecomposition::new(asym, vec![0.0, 0.0]).is_err());
        let neg = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, -0.5, 0.0]);
        assert!(JumpKillingDecomposition::new(neg, vec![0.0, 0.0]).is_err());
        let err = decompose(&m(&[&[1.0, 0.5], &[0.5, 1.0]])).unwrap_err();
        assert!(err.to_string().contains("off-diagonal entry (0, 1)"), "{err}");
    }

    #[test]
    fn json_roundtrip() {
        let d = decompose(&m(&[&[2.0, -1.0], &[-1.0, 3.0]])).unwrap();
        let text = d.to_json_value().to_string();
        assert_eq!(
            text,
            r#"{"J":[{"value":0.5,"x":0,"y":1},{"value":0.5,"x":1,"y":0}],"kappa":[1.0,2.0]}"#
        );
        assert_eq!(JumpKillingDecomposition::from_json_str(&text).unwrap(), d);
    }
}
