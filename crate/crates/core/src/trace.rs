//! Traces of forms onto vertex subsets and the effective resistance metric.
//!
//! The trace of `E` onto `U` is the form `f ↦ min { E(g) : g|_U = f }`. With
//! `W = V \ U` and the block split of `A`, the minimizer takes the values
//! `g|_W = -A_WW⁻¹ A_WU f` and the traced matrix is the Schur complement
//! `A_UU - A_UW A_WW⁻¹ A_WU`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::form::{energy, FormMatrix, FunctionOnV, DEFAULT_TOL};
use crate::linalg::{snap_to_markov, SpdFactor};

/// A traced form together with its harmonic extension operator.
#[derive(Debug, Clone)]
pub struct TraceResult {
    subset: Vec<usize>,
    complement: Vec<usize>,
    traced: FormMatrix,
    extension: DMatrix<f64>,
}

impl TraceResult {
    /// The subset `U`, in the order that indexes the traced form.
    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    /// `V \ U` in ascending order; rows of the extension operator.
    pub fn complement(&self) -> &[usize] {
        &self.complement
    }

    pub fn traced_form(&self) -> &FormMatrix {
        &self.traced
    }

    /// `|W| x |U|` matrix sending boundary values to interior values.
    pub fn extension_operator(&self) -> &DMatrix<f64> {
        &self.extension
    }

    pub fn into_form(self) -> FormMatrix {
        self.traced
    }
}

fn validate_subset(n: usize, subset: &[usize]) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::InvalidSubset("subset is empty".into()));
    }
    let mut seen = vec![false; n];
    for &i in subset {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidSubset(format!("vertex {i} listed twice")));
        }
    }
    Ok(())
}

/// Trace of `a` onto `subset`.
///
/// Fails with [`Error::SingularInterior`] when some connected component of the
/// support graph misses `subset` and carries no killing, since the interior
/// block is then singular.
pub fn trace(a: &FormMatrix, subset: &[usize]) -> Result<TraceResult> {
    let n = a.dim();
    validate_subset(n, subset)?;
    let mut in_subset = vec![false; n];
    for &i in subset {
        in_subset[i] = true;
    }
    let complement: Vec<usize> = (0..n).filter(|&i| !in_subset[i]).collect();
    if complement.is_empty() {
        return Ok(TraceResult {
            subset: subset.to_vec(),
            complement,
            traced: a.principal(subset),
            extension: DMatrix::zeros(0, subset.len()),
        });
    }

    let killing_eps = DEFAULT_TOL * a.scale();
    let row_sums = a.row_sums();
    for comp in a.components() {
        let meets_subset = comp.iter().any(|&x| in_subset[x]);
        let killed = comp.iter().any(|&x| row_sums[x] > killing_eps);
        if !meets_subset && !killed {
            return Err(Error::SingularInterior { component: comp });
        }
    }

    let m = a.matrix();
    let a_ww = m.select_rows(&complement).select_columns(&complement);
    let a_wu = m.select_rows(&complement).select_columns(subset);
    let a_uu = m.select_rows(subset).select_columns(subset);
    let factor = SpdFactor::new(a_ww)?;
    let solved = factor.solve(&a_wu);
    let mut traced = &a_uu - a_wu.transpose() * &solved;
    snap_to_markov(&mut traced, killing_eps);
    Ok(TraceResult {
        subset: subset.to_vec(),
        complement,
        traced: FormMatrix::from_matrix_symmetrized(traced)?,
        extension: -solved,
    })
}

/// Extends boundary values `f` on the subset to the energy minimizer on `V`.
pub fn harmonic_extension(tr: &TraceResult, f: &[f64]) -> Result<FunctionOnV> {
    let k = tr.subset.len();
    if f.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: f.len() });
    }
    let n = k + tr.complement.len();
    let mut g = vec![0.0; n];
    for (&x, &v) in tr.subset.iter().zip(f) {
        g[x] = v;
    }
    for (row, &w) in tr.complement.iter().enumerate() {
        g[w] = (0..k).map(|j| tr.extension[(row, j)] * f[j]).sum();
    }
    Ok(FunctionOnV::new(g))
}

fn require_conservative(a: &FormMatrix) -> Result<()> {
    let eps = DEFAULT_TOL * a.scale();
    for (x, s) in a.row_sums().into_iter().enumerate() {
        if s.abs() > eps {
            return Err(Error::KillingPresent { vertex: x, killing: s });
        }
    }
    Ok(())
}

fn check_index(a: &FormMatrix, x: usize) -> Result<()> {
    if x >= a.dim() {
        return Err(Error::IndexOutOfRange { index: x, len: a.dim() });
    }
    Ok(())
}

/// Effective resistance between `x` and `y`: the reciprocal of the single
/// conductance left after tracing onto `{x, y}`.
pub fn effective_resistance(a: &FormMatrix, x: usize, y: usize) -> Result<f64> {
    check_index(a, x)?;
    check_index(a, y)?;
    if x == y {
        return Err(Error::SameVertex(x));
    }
    require_conservative(a)?;
    let comp = a
        .components()
        .into_iter()
        .find(|c| c.contains(&x))
        .expect("every vertex lies in a component");
    let (Ok(ix), Ok(iy)) = (comp.binary_search(&x), comp.binary_search(&y)) else {
        return Err(Error::InfiniteResistance { x, y });
    };
    let local = a.principal(&comp);
    let tr = trace(&local, &[ix, iy])?;
    let c_eff = -tr.traced_form().get(0, 1);
    if !(c_eff > 0.0) {
        return Err(Error::InfiniteResistance { x, y });
    }
    Ok(1.0 / c_eff)
}

/// Pairwise effective resistances.
#[derive(Debug, Clone, PartialEq)]
pub struct ResistanceMatrix {
    r: DMatrix<f64>,
}

impl ResistanceMatrix {
    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.r[(x, y)]
    }

    pub fn max(&self) -> f64 {
        self.r.iter().fold(0.0, |m: f64, v| m.max(*v))
    }

    pub fn to_csv(&self) -> String {
        FormMatrix::from_matrix(self.r.clone())
            .expect("resistance matrix is symmetric")
            .to_csv()
    }
}

/// All pairwise resistances via the grounded inverse: with vertex 0 grounded
/// and `G` the inverse of the remaining block (zero-padded), `R(x, y) =
/// G_xx + G_yy - 2 G_xy`.
pub fn resistance_matrix(a: &FormMatrix) -> Result<ResistanceMatrix> {
    let n = a.dim();
    require_conservative(a)?;
    let comps = a.components();
    if comps.len() > 1 {
        return Err(Error::InfiniteResistance { x: comps[0][0], y: comps[1][0] });
    }
    if n <= 1 {
        return Ok(ResistanceMatrix { r: DMatrix::zeros(n, n) });
    }
    let rest: Vec<usize> = (1..n).collect();
    let g_inner = SpdFactor::new(a.principal(&rest).matrix().clone())?.inverse();
    let g = |i: usize, j: usize| if i == 0 || j == 0 { 0.0 } else { g_inner[(i - 1, j - 1)] };
    let mut r = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in (x + 1)..n {
            let v = g(x, x) + g(y, y) - 2.0 * g(x, y);
            r[(x, y)] = v;
            r[(y, x)] = v;
        }
    }
    Ok(ResistanceMatrix { r })
}

/// `(u(x) - u(y))² / E(u, u)`; never exceeds `R(x, y)`.
pub fn sup_formula_value(a: &FormMatrix, x: usize, y: usize, u: &[f64]) -> Result<f64> {
    check_index(a, x)?;
    check_index(a, y)?;
    let e = energy(a, u)?;
    let sup = u.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if !(e > 1e-13 * a.scale() * sup * sup) {
        return Err(Error::ZeroEnergy);
    }
    let d = u[x] - u[y];
    Ok(d * d / e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::assemble;
    use crate::network::{Edge, Network};

    fn net(n: usize, edges: &[(usize, usize, f64)]) -> FormMatrix {
        assemble(
            &Network::with_indices(n, edges.iter().map(|&(u, v, c)| Edge { u, v, c }).collect(), None)
                .unwrap(),
        )
    }

    fn triangle() -> FormMatrix {
        net(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)])
    }

    /// Golden-section minimization over the single interior value.
    fn brute_min_interior(a: &FormMatrix, boundary: [f64; 2], interior: usize) -> f64 {
        let e = |m: f64| {
            let mut g = vec![0.0; 3];
            let others: Vec<usize> = (0..3).filter(|&i| i != interior).collect();
            g[others[0]] = boundary[0];
            g[others[1]] = boundary[1];
            g[interior] = m;
            energy(a, &g).unwrap()
        };
        let (mut lo, mut hi) = (-10.0, 10.0);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let m1 = hi - phi * (hi - lo);
            let m2 = lo + phi * (hi - lo);
            if e(m1) < e(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        e(0.5 * (lo + hi))
    }

    #[test]
    fn path_trace_is_series_edge() {
        let a = net(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let tr = trace(&a, &[0, 2]).unwrap();
        let t = tr.traced_form();
        assert!((t.get(0, 1) + 0.5).abs() < 1e-15);
        assert!((t.get(0, 0) - 0.5).abs() < 1e-15);
        // brute-force oracle: min over the interior value for f = (1, 0)
        let brute = brute_min_interior(&a, [1.0, 0.0], 1);
        assert!((energy(t, &[1.0, 0.0]).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn triangle_trace_is_three_halves() {
        let a = triangle();
        let tr = trace(&a, &[0, 1]).unwrap();
        assert!((tr.traced_form().get(0, 1) + 1.5).abs() < 1e-15);
        let brute = brute_min_interior(&a, [1.0, 0.0], 2);
        assert!((brute - 1.5).abs() < 1e-12);
    }

    #[test]
    fn trace_onto_everything_is_identity() {
        let a = triangle();
        let tr = trace(&a, &[0, 1, 2]).unwrap();
        assert_eq!(tr.traced_form(), &a);
        assert_eq!(harmonic_extension(&tr, &[0.3, 0.1, 0.9]).unwrap().into_inner(), vec![0.3, 0.1, 0.9]);
    }

    #[test]
    fn harmonic_extension_examples() {
        let a = net(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let tr = trace(&a, &[0, 2]).unwrap();
        let g = harmonic_extension(&tr, &[1.0, 0.0]).unwrap();
        assert!((g[1] - 0.5).abs() < 1e-15);
        assert_eq!((g[0], g[2]), (1.0, 0.0));
        let c = harmonic_extension(&tr, &[2.0, 2.0]).unwrap();
        assert!(c.iter().all(|&v| (v - 2.0).abs() < 1e-14));
        assert!(harmonic_extension(&tr, &[1.0]).is_err());
    }

    #[test]
    fn singular_interior_names_component() {
        // 0-1 connected, 2-3 floating with no killing
        let a = net(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        let err = trace(&a, &[0]).unwrap_err();
        assert_eq!(err, Error::SingularInterior { component: vec![2, 3] });
        // killing on the floating part makes it solvable
        let killed = assemble(
            &Network::with_indices(
                4,
                vec![Edge { u: 0, v: 1, c: 1.0 }, Edge { u: 2, v: 3, c: 1.0 }],
                Some(vec![0.0, 0.0, 0.0, 1.0]),
            )
            .unwrap(),
        );
        assert!(trace(&killed, &[0]).is_ok());
    }

    #[test]
    fn subset_validation() {
        let a = triangle();
        assert!(matches!(trace(&a, &[]), Err(Error::InvalidSubset(_))));
        assert!(matches!(trace(&a, &[0, 0]), Err(Error::InvalidSubset(_))));
        assert!(matches!(trace(&a, &[5]), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn resistance_examples() {
        let edge = net(2, &[(0, 1, 4.0)]);
        assert!((effective_resistance(&edge, 0, 1).unwrap() - 0.25).abs() < 1e-15);
        let path = net(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        assert!((effective_resistance(&path, 0, 2).unwrap() - 2.0).abs() < 1e-14);
        let tri = triangle();
        for (x, y) in [(0, 1), (1, 2), (0, 2)] {
            assert!((effective_resistance(&tri, x, y).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        }
        let rm = resistance_matrix(&tri).unwrap();
        for x in 0..3 {
            assert_eq!(rm.get(x, x), 0.0);
            for y in 0..3 {
                if x != y {
                    assert!((rm.get(x, y) - 2.0 / 3.0).abs() < 1e-15);
                }
            }
        }
        let unit = resistance_matrix(&net(2, &[(0, 1, 1.0)])).unwrap();
        assert_eq!(unit.get(0, 1), 1.0);
    }

    #[test]
    fn resistance_errors() {
        let killed = assemble(
            &Network::with_indices(2, vec![Edge { u: 0, v: 1, c: 1.0 }], Some(vec![1.0, 0.0])).unwrap(),
        );
        assert!(matches!(effective_resistance(&killed, 0, 1), Err(Error::KillingPresent { vertex: 0, .. })));
        let split = net(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        assert_eq!(effective_resistance(&split, 0, 2), Err(Error::InfiniteResistance { x: 0, y: 2 }));
        // same component of a disconnected network is still fine
        assert!((effective_resistance(&split, 2, 3).unwrap() - 1.0).abs() < 1e-15);
        assert!(resistance_matrix(&split).is_err());
        assert_eq!(effective_resistance(&split, 1, 1), Err(Error::SameVertex(1)));
    }

    #[test]
    fn sup_formula_examples() {
        let path = net(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let tr = trace(&path, &[0, 2]).unwrap();
        let u = harmonic_extension(&tr, &[1.0, 0.0]).unwrap();
        let r = effective_resistance(&path, 0, 2).unwrap();
        assert!((sup_formula_value(&path, 0, 2, &u).unwrap() - r).abs() < 1e-14);
        let affine = u.map(|v| -3.0 * v + 7.0);
        assert!((sup_formula_value(&path, 0, 2, &affine).unwrap() - r).abs() < 1e-13);

        let edge = net(2, &[(0, 1, 1.0)]);
        assert_eq!(sup_formula_value(&edge, 0, 1, &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(sup_formula_value(&edge, 0, 1, &[2.0, 2.0]), Err(Error::ZeroEnergy));
    }

    #[test]
    fn trace_onto_one_vertex_of_free_component_is_zero() {
        let a = net(2, &[(0, 1, 4.390786805232956)]);
        let t = trace(&a, &[0]).unwrap();
        assert_eq!(t.traced_form().get(0, 0), 0.0);
        assert!(crate::form::is_markov(t.traced_form(), 1e-12).markov);
    }
}
