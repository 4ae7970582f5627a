//! Embedding a finite point set through a finitely generated function
//! algebra.
//!
//! Each point `x` maps to the tuple `ι(x) = (g_1(x), ..., g_k(x))` of
//! generator values. Points with equal tuples are not separated by the
//! algebra and collapse into one class; measures push forward by summing
//! over classes and forms transfer by summing over class blocks.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::form::{evaluate, require_markov, AtomicMeasure, FormMatrix, DEFAULT_TOL};
use crate::linalg::snap_to_markov;

/// Points with at least this many distinct images within `ε` (and none within
/// `ε/2`) are reported as candidate limit points. Diagnostic only.
pub const LIMIT_POINT_MIN_IMAGES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgebraSpec {
    points: Vec<Value>,
    generators: Vec<Vec<f64>>,
}

impl AlgebraSpec {
    pub fn new(points: Vec<Value>, generators: Vec<Vec<f64>>) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::InvalidAlgebra("at least one generator is required".into()));
        }
        for (i, g) in generators.iter().enumerate() {
            if g.len() != points.len() {
                return Err(Error::InvalidAlgebra(format!(
                    "generator {i} has {} values for {} points",
                    g.len(),
                    points.len()
                )));
            }
            if let Some(x) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidAlgebra(format!("generator {i} is not finite at point {x}")));
            }
        }
        Ok(AlgebraSpec { points, generators })
    }

    pub fn with_indices(n: usize, generators: Vec<Vec<f64>>) -> Result<Self> {
        Self::new((0..n).map(Value::from).collect(), generators)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            points: Vec<Value>,
            generators: Vec<Vec<f64>>,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|e| crate::network::json_error(text, &e))?;
        Self::new(raw.points, raw.generators)
    }

    pub fn points(&self) -> &[Value] {
        &self.points
    }

    pub fn generators(&self) -> &[Vec<f64>] {
        &self.generators
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn image(&self, x: usize) -> Vec<f64> {
        self.generators.iter().map(|g| g[x]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingResult {
    images: Vec<Vec<f64>>,
    classes: Vec<Vec<usize>>,
    class_of: Vec<usize>,
    separated: bool,
}

impl EmbeddingResult {
    pub fn images(&self) -> &[Vec<f64>] {
        &self.images
    }

    /// Classes in order of first occurrence, members ascending.
    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn class_of(&self) -> &[usize] {
        &self.class_of
    }

    pub fn separated(&self) -> bool {
        self.separated
    }

    /// Values of a class-constant function on the classes.
    pub fn class_values(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.class_of.len() {
            return Err(Error::DimensionMismatch { expected: self.class_of.len(), got: f.len() });
        }
        self.classes
            .iter()
            .enumerate()
            .map(|(c, members)| {
                let v = f[members[0]];
                match members.iter().find(|&&x| f[x] != v) {
                    Some(&b) => Err(Error::NotClassConstant { class: c, a: members[0], b }),
                    None => Ok(v),
                }
            })
            .collect()
    }

    /// The class-constant function on points taking `values` on classes.
    pub fn lift(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.classes.len() {
            return Err(Error::DimensionMismatch { expected: self.classes.len(), got: values.len() });
        }
        Ok(self.class_of.iter().map(|&c| values[c]).collect())
    }
}

fn canonical_bits(v: f64) -> u64 {
    // -0.0 and 0.0 are the same generator value
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

/// Computes images and the classes of points with identical images.
///
/// `tol = None` compares tuples exactly. With `Some(t)` a point joins the
/// first class whose first member's image is within `t` in the max norm.
pub fn embed(spec: &AlgebraSpec, tol: Option<f64>) -> EmbeddingResult {
    let n = spec.len();
    let images: Vec<Vec<f64>> = (0..n).map(|x| spec.image(x)).collect();
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut class_of = Vec::with_capacity(n);
    match tol {
        None => {
            let mut by_key: HashMap<Vec<u64>, usize> = HashMap::new();
            for (x, img) in images.iter().enumerate() {
                let key = img.iter().map(|&v| canonical_bits(v)).collect();
                let c = *by_key.entry(key).or_insert_with(|| {
                    classes.push(Vec::new());
                    classes.len() - 1
                });
                classes[c].push(x);
                class_of.push(c);
            }
        }
        Some(t) => {
            for (x, img) in images.iter().enumerate() {
                let found = classes.iter().position(|members| {
                    images[members[0]].iter().zip(img).all(|(a, b)| (a - b).abs() <= t)
                });
                let c = found.unwrap_or_else(|| {
                    classes.push(Vec::new());
                    classes.len() - 1
                });
                classes[c].push(x);
                class_of.push(c);
            }
        }
    }
    let separated = classes.iter().all(|c| c.len() == 1);
    EmbeddingResult { images, classes, class_of, separated }
}

/// Whether every point has some generator that is nonzero there; returns the
/// points where all generators vanish.
pub fn vanishes_nowhere(spec: &AlgebraSpec) -> (bool, Vec<usize>) {
    let witnesses: Vec<usize> = (0..spec.len())
        .filter(|&x| spec.generators.iter().all(|g| g[x] == 0.0))
        .collect();
    (witnesses.is_empty(), witnesses)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PushforwardMeasure {
    atoms: Vec<f64>,
    total: f64,
}

impl PushforwardMeasure {
    /// One weight per class.
    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    /// Total mass, summed over the original points in their original order
    /// so that it equals the source total bit for bit.
    pub fn total(&self) -> f64 {
        self.total
    }
}

pub fn pushforward(mu: &AtomicMeasure, emb: &EmbeddingResult) -> Result<PushforwardMeasure> {
    let n = emb.class_of.len();
    if mu.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: mu.len() });
    }
    let mut atoms = vec![0.0; emb.classes.len()];
    for (x, &w) in mu.weights().iter().enumerate() {
        atoms[emb.class_of[x]] += w;
    }
    let total = mu.weights().iter().sum();
    Ok(PushforwardMeasure { atoms, total })
}

/// Both `L²` norms of a class-constant function and their difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsometryCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
}

/// `‖f‖_{L²(μ)}` against `‖f̂‖_{L²(μ̂)}`.
pub fn l2_isometry_check(f: &[f64], mu: &AtomicMeasure, emb: &EmbeddingResult) -> Result<IsometryCheck> {
    let values = emb.class_values(f)?;
    let hat = pushforward(mu, emb)?;
    let lhs = f
        .iter()
        .zip(mu.weights())
        .map(|(v, w)| v * v * w)
        .sum::<f64>()
        .sqrt();
    let rhs = values
        .iter()
        .zip(hat.atoms())
        .map(|(v, w)| v * v * w)
        .sum::<f64>()
        .sqrt();
    Ok(IsometryCheck { lhs, rhs, diff: (lhs - rhs).abs() })
}

/// Quotient form `Â[C][D] = Σ_{x∈C, y∈D} A[x][y]`, so that
/// `Ê(f̂, ĝ) = E(f, g)` for class-constant `f`, `g`.
///
/// The descent is verified on every pair of class indicators; a mismatch
/// beyond `1e-12 · max|A| · |C| · |D|` is reported with the offending pair.
pub fn transfer_form(a: &FormMatrix, emb: &EmbeddingResult) -> Result<FormMatrix> {
    let n = emb.class_of.len();
    if a.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.dim() });
    }
    require_markov(a)?;
    let k = emb.classes.len();
    let mut q = DMatrix::zeros(k, k);
    for x in 0..n {
        for y in 0..n {
            q[(emb.class_of[x], emb.class_of[y])] += a.get(x, y);
        }
    }
    snap_to_markov(&mut q, DEFAULT_TOL * a.scale());
    let quotient = FormMatrix::from_matrix_symmetrized(q)?;

    let indicator = |c: usize| -> Vec<f64> { emb.class_of.iter().map(|&d| if d == c { 1.0 } else { 0.0 }).collect() };
    let indicators: Vec<Vec<f64>> = (0..k).map(indicator).collect();
    let scale = a.scale();
    for c in 0..k {
        for d in c..k {
            let direct = evaluate(a, &indicators[c], &indicators[d])?;
            let on_quotient = quotient.get(c, d);
            let bound = 1e-12 * scale * (emb.classes[c].len() * emb.classes[d].len()) as f64;
            if (direct - on_quotient).abs() > bound {
                return Err(Error::DescentFailure { c, d, direct, quotient: on_quotient });
            }
        }
    }
    Ok(quotient)
}

/// A probe location flagged as a possible limit point of the image set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitCandidate {
    pub location: Vec<f64>,
    pub images_within_eps: usize,
    pub nearest_image: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosureEstimate {
    pub epsilon: f64,
    /// Greedy `ε`-net of the distinct images, in enumeration order.
    pub net: Vec<Vec<f64>>,
    /// Distinct images within `ε` of each net point.
    pub net_counts: Vec<usize>,
    pub candidates: Vec<LimitCandidate>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Approximates the closure of the image set at resolution `epsilon`.
///
/// Probes are the points of the lattice `(ε/2)ℤᵏ` reached from each net point
/// by up to four half-steps along one axis. A probe is flagged when at least
/// [`LIMIT_POINT_MIN_IMAGES`] distinct images lie within `ε` of it but none
/// within `ε/2`: images accumulate towards it without reaching it. This is a
/// heuristic at truncation scale, not a proof of accumulation.
pub fn spectrum_closure_estimate(spec: &AlgebraSpec, epsilon: f64) -> Result<ClosureEstimate> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let emb = embed(spec, None);
    let distinct: Vec<&Vec<f64>> = emb.classes.iter().map(|c| &emb.images[c[0]]).collect();

    let mut net: Vec<Vec<f64>> = Vec::new();
    for img in &distinct {
        if net.iter().all(|p| dist(p, img) > epsilon) {
            net.push((*img).clone());
        }
    }
    let net_counts = net
        .iter()
        .map(|p| distinct.iter().filter(|img| dist(p, img) <= epsilon).count())
        .collect();

    let half = epsilon / 2.0;
    let k = spec.generators.len();
    let mut probes: BTreeMap<Vec<i64>, ()> = BTreeMap::new();
    for p in &net {
        let base: Vec<i64> = p.iter().map(|v| (v / half).round() as i64).collect();
        for axis in 0..k {
            for step in -4i64..=4 {
                let mut key = base.clone();
                key[axis] += step;
                probes.insert(key, ());
            }
        }
    }
    let mut candidates = Vec::new();
    for key in probes.keys() {
        let q: Vec<f64> = key.iter().map(|&i| i as f64 * half).collect();
        let mut count = 0;
        let mut nearest = f64::INFINITY;
        for img in &distinct {
            let d = dist(&q, img);
            nearest = nearest.min(d);
            if d <= epsilon {
                count += 1;
            }
        }
        if count >= LIMIT_POINT_MIN_IMAGES && nearest > half {
            candidates.push(LimitCandidate { location: q, images_within_eps: count, nearest_image: nearest });
        }
    }
    Ok(ClosureEstimate { epsilon, net, net_counts, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::{assemble, unit_contraction};
    use crate::network::{Edge, Network};

    #[test]
    fn embed_examples() {
        let ind = AlgebraSpec::with_indices(3, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]])
            .unwrap();
        let e = embed(&ind, None);
        assert!(e.separated());
        assert_eq!(e.classes(), &[vec![0], vec![1], vec![2]]);

        let constant = AlgebraSpec::with_indices(3, vec![vec![1.0; 3]]).unwrap();
        let e = embed(&constant, None);
        assert!(!e.separated());
        assert_eq!(e.classes(), &[vec![0, 1, 2]]);

        let id = AlgebraSpec::with_indices(3, vec![vec![0.0, 0.5, 1.0]]).unwrap();
        let e = embed(&id, None);
        assert!(e.separated());
        assert_eq!(e.images(), &[vec![0.0], vec![0.5], vec![1.0]]);
    }

    #[test]
    fn tolerance_merging_is_opt_in() {
        let spec = AlgebraSpec::with_indices(3, vec![vec![0.0, 1e-12, 1.0]]).unwrap();
        assert!(embed(&spec, None).separated());
        assert_eq!(embed(&spec, Some(1e-9)).classes(), &[vec![0, 1], vec![2]]);
        let signed = AlgebraSpec::with_indices(2, vec![vec![0.0, -0.0]]).unwrap();
        assert!(!embed(&signed, None).separated());
    }

    #[test]
    fn spec_validation() {
        assert!(AlgebraSpec::with_indices(2, vec![]).is_err());
        assert!(AlgebraSpec::with_indices(2, vec![vec![1.0]]).is_err());
        assert!(AlgebraSpec::with_indices(1, vec![vec![f64::NAN]]).is_err());
    }

    #[test]
    fn vanishing_examples() {
        assert_eq!(vanishes_nowhere(&AlgebraSpec::with_indices(2, vec![vec![1.0, 1.0]]).unwrap()), (true, vec![]));
        assert_eq!(vanishes_nowhere(&AlgebraSpec::with_indices(2, vec![vec![0.0, 1.0]]).unwrap()), (false, vec![0]));
        let ind = AlgebraSpec::with_indices(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(vanishes_nowhere(&ind).0);
    }

    #[test]
    fn pushforward_examples() {
        let spec = AlgebraSpec::with_indices(3, vec![vec![3.0, 1.0, 2.0]]).unwrap();
        let mu = AtomicMeasure::new(vec![0.5, 0.25, 0.125]).unwrap();
        let p = pushforward(&mu, &embed(&spec, None)).unwrap();
        assert_eq!(p.atoms(), &[0.5, 0.25, 0.125]);

        let merged = AlgebraSpec::with_indices(2, vec![vec![7.0, 7.0]]).unwrap();
        let mu = AtomicMeasure::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(pushforward(&mu, &embed(&merged, None)).unwrap().atoms(), &[1.0]);

        // μ = Σ 2⁻ⁿ δ_{qₙ} truncated at N = 20 on distinct rationals
        let q: Vec<f64> = (1..=20).map(|n| 1.0 / (n as f64 + 1.0)).collect();
        let spec = AlgebraSpec::with_indices(20, vec![q]).unwrap();
        let mu = AtomicMeasure::new((1..=20).map(|n| 2f64.powi(-n)).collect()).unwrap();
        let p = pushforward(&mu, &embed(&spec, None)).unwrap();
        assert_eq!(p.total(), 1.0 - 2f64.powi(-20));
        assert_eq!(p.atoms().iter().sum::<f64>(), 1.0 - 2f64.powi(-20));

        assert!(pushforward(&AtomicMeasure::counting(2), &embed(&spec, None)).is_err());
    }

    #[test]
    fn isometry_examples() {
        let merged = AlgebraSpec::with_indices(2, vec![vec![7.0, 7.0]]).unwrap();
        let emb = embed(&merged, None);
        let mu = AtomicMeasure::new(vec![0.25, 0.75]).unwrap();
        let c = 3.0;
        let chk = l2_isometry_check(&[c, c], &mu, &emb).unwrap();
        assert_eq!((chk.lhs, chk.rhs, chk.diff), (c, c, 0.0));
        assert!(matches!(l2_isometry_check(&[1.0, 2.0], &mu, &emb), Err(Error::NotClassConstant { .. })));

        let spec = AlgebraSpec::with_indices(3, vec![vec![1.0, 1.0, 2.0]]).unwrap();
        let emb = embed(&spec, None);
        let mu = AtomicMeasure::new(vec![0.5, 1.5, 2.0]).unwrap();
        let chk = l2_isometry_check(&spec.generators()[0], &mu, &emb).unwrap();
        assert_eq!(chk.diff, 0.0);
    }

    #[test]
    fn transfer_merges_parallel_edges() {
        let a = assemble(
            &Network::with_indices(3, vec![Edge { u: 0, v: 2, c: 1.0 }, Edge { u: 1, v: 2, c: 1.0 }], None)
                .unwrap(),
        );
        let spec = AlgebraSpec::with_indices(3, vec![vec![5.0, 5.0, 0.0]]).unwrap();
        let emb = embed(&spec, None);
        let q = transfer_form(&a, &emb).unwrap();
        assert_eq!(q.rows(), vec![vec![2.0, -2.0], vec![-2.0, 2.0]]);

        let sep = AlgebraSpec::with_indices(3, vec![vec![2.0, 0.0, 1.0]]).unwrap();
        assert_eq!(transfer_form(&a, &embed(&sep, None)).unwrap(), a);
    }

    #[test]
    fn contraction_commutes_with_quotient() {
        let spec = AlgebraSpec::with_indices(4, vec![vec![1.0, 1.0, 2.0, 3.0]]).unwrap();
        let emb = embed(&spec, None);
        let values = [-0.4, 0.6, 1.9];
        let a = unit_contraction(&emb.lift(&values).unwrap()).into_inner();
        let b = emb.lift(&unit_contraction(&values)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn closure_flags_accumulation_at_zero() {
        let values: Vec<f64> = (1..=1000).map(|n| 1.0 / n as f64).collect();
        let spec = AlgebraSpec::with_indices(1000, vec![values]).unwrap();
        let est = spectrum_closure_estimate(&spec, 0.01).unwrap();
        assert!(!est.candidates.is_empty());
        assert!(est.candidates.iter().all(|c| c.location[0].abs() <= 0.01), "{:?}", est.candidates);
    }

    #[test]
    fn closure_no_flags_for_separated_or_constant() {
        let spec = AlgebraSpec::with_indices(5, vec![vec![0.0, 0.1, 0.2, 0.3, 0.4]]).unwrap();
        let est = spectrum_closure_estimate(&spec, 0.05).unwrap();
        assert_eq!(est.net.len(), 5);
        assert!(est.candidates.is_empty());

        let constant = AlgebraSpec::with_indices(30, vec![vec![1.0; 30]]).unwrap();
        let est = spectrum_closure_estimate(&constant, 0.1).unwrap();
        assert_eq!(est.net, vec![vec![1.0]]);
        assert!(est.candidates.is_empty());
        assert!(spectrum_closure_estimate(&constant, 0.0).is_err());
    }
}
