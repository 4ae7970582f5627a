//! Compatible sequences of finite forms.
//!
//! A sequence `V_0 ⊂ V_1 ⊂ ...` of vertex sets carries forms `E_n` on `V_n`
//! such that tracing `E_{n+1}` onto the image of `V_n` gives back `E_n`.
//! Restrictions of a fixed function then have nondecreasing energies.

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::form::{assemble, energy, FormMatrix, FunctionOnV};
use crate::network::{Edge, Network};
use crate::trace::trace;

/// Default compatibility tolerance, relative to `max |A_n|`.
pub const DEFAULT_COMPAT_TOL: f64 = 1e-9;

/// Standard resistance renormalization of the Sierpinski gasket.
pub const GASKET_FACTOR: f64 = 5.0 / 3.0;

pub const MAX_DYADIC_LEVELS: usize = 20;
pub const MAX_GASKET_LEVELS: usize = 8;

#[derive(Debug, Clone)]
pub struct Level {
    pub network: Network,
    pub form: FormMatrix,
}

/// Per-level outcome of [`check_compatibility`]. Entry `n` compares the
/// trace of level `n + 1` with level `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityReport {
    pub deviations: Vec<f64>,
    pub scales: Vec<f64>,
    pub tol: f64,
}

impl CompatibilityReport {
    pub fn accepted(&self) -> bool {
        self.deviations
            .iter()
            .zip(&self.scales)
            .all(|(d, s)| *d <= self.tol * s)
    }

    pub fn max_relative_deviation(&self) -> f64 {
        self.deviations
            .iter()
            .zip(&self.scales)
            .map(|(d, s)| if *s > 0.0 { d / s } else { *d })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug)]
pub struct CompatibleSequence {
    levels: Vec<Level>,
    inclusions: Vec<Vec<usize>>,
    compat: OnceLock<Result<CompatibilityReport>>,
}

impl Clone for CompatibleSequence {
    fn clone(&self) -> Self {
        CompatibleSequence {
            levels: self.levels.clone(),
            inclusions: self.inclusions.clone(),
            compat: OnceLock::new(),
        }
    }
}

impl PartialEq for CompatibleSequence {
    fn eq(&self, other: &Self) -> bool {
        self.inclusions == other.inclusions
            && self.levels.len() == other.levels.len()
            && self.levels.iter().zip(&other.levels).all(|(a, b)| a.network == b.network)
    }
}

#[derive(Deserialize)]
struct RawSequence {
    levels: Vec<Value>,
    inclusions: Option<Vec<Vec<usize>>>,
}

impl CompatibleSequence {
    /// Validates the inclusion maps; `inclusions[n]` sends `V_n` into `V_{n+1}`.
    /// Compatibility itself is checked separately, never assumed.
    pub fn new(networks: Vec<Network>, inclusions: Vec<Vec<usize>>) -> Result<Self> {
        if networks.is_empty() {
            return Err(Error::InvalidSequence("no levels".into()));
        }
        if inclusions.len() + 1 != networks.len() {
            return Err(Error::InvalidSequence(format!(
                "{} levels need {} inclusion maps, got {}",
                networks.len(),
                networks.len() - 1,
                inclusions.len()
            )));
        }
        for (n, map) in inclusions.iter().enumerate() {
            let (from, to) = (networks[n].len(), networks[n + 1].len());
            if map.len() != from {
                return Err(Error::InvalidSequence(format!(
                    "inclusion {n} has {} entries for {from} vertices",
                    map.len()
                )));
            }
            let mut hit = vec![false; to];
            for (x, &y) in map.iter().enumerate() {
                if y >= to {
                    return Err(Error::InvalidSequence(format!(
                        "inclusion {n} sends vertex {x} to {y}, outside 0..{to}"
                    )));
                }
                if std::mem::replace(&mut hit[y], true) {
                    return Err(Error::InvalidSequence(format!(
                        "inclusion {n} is not injective: vertex {y} is hit twice"
                    )));
                }
            }
        }
        let levels = networks
            .into_iter()
            .map(|network| Level { form: assemble(&network), network })
            .collect();
        Ok(CompatibleSequence { levels, inclusions, compat: OnceLock::new() })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawSequence =
            serde_json::from_str(text).map_err(|e| crate::network::json_error(text, &e))?;
        let inclusions = raw
            .inclusions
            .ok_or_else(|| Error::InvalidSequence("missing inclusions".into()))?;
        let networks = raw
            .levels
            .iter()
            .map(|v| Network::from_json_str(&v.to_string()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(networks, inclusions)
    }

    pub fn to_json_value(&self) -> Value {
        json!({
            "levels": self.levels.iter().map(|l| l.network.to_json_value()).collect::<Vec<_>>(),
            "inclusions": self.inclusions,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_value().to_string())?;
        Ok(())
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn top(&self) -> &Level {
        self.levels.last().expect("sequences are nonempty")
    }

    pub fn inclusions(&self) -> &[Vec<usize>] {
        &self.inclusions
    }

    /// Index in the top level of each vertex of level `n`.
    pub fn embedding_into_top(&self, n: usize) -> Vec<usize> {
        let mut map: Vec<usize> = (0..self.levels[n].network.len()).collect();
        for inc in &self.inclusions[n..] {
            for x in map.iter_mut() {
                *x = inc[*x];
            }
        }
        map
    }

    /// Compatibility at the default tolerance, computed once.
    pub fn compatibility(&self) -> &Result<CompatibilityReport> {
        self.compat.get_or_init(|| check_compatibility(self, DEFAULT_COMPAT_TOL))
    }

    /// Copy with one conductance of one level replaced; for negative controls.
    pub fn with_perturbed_edge(&self, level: usize, edge: usize, delta: f64) -> Result<Self> {
        let mut networks: Vec<Network> = self.levels.iter().map(|l| l.network.clone()).collect();
        let net = &networks[level];
        let mut edges = net.edges().to_vec();
        edges[edge].c += delta;
        networks[level] = Network::new(net.vertices().to_vec(), edges, Some(net.killing().to_vec()))?;
        Self::new(networks, self.inclusions.clone())
    }
}

/// Maximum entrywise deviation between the trace of each level onto the
/// previous one and the previous form.
pub fn check_compatibility(seq: &CompatibleSequence, tol: f64) -> Result<CompatibilityReport> {
    let mut deviations = Vec::with_capacity(seq.len().saturating_sub(1));
    let mut scales = Vec::with_capacity(deviations.capacity());
    for (n, inc) in seq.inclusions.iter().enumerate() {
        let coarse = &seq.levels[n].form;
        let traced = trace(&seq.levels[n + 1].form, inc)?;
        let t = traced.traced_form();
        let mut dev = 0.0f64;
        for i in 0..coarse.dim() {
            for j in 0..coarse.dim() {
                dev = dev.max((t.get(i, j) - coarse.get(i, j)).abs());
            }
        }
        deviations.push(dev);
        scales.push(coarse.scale());
    }
    Ok(CompatibilityReport { deviations, scales, tol })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyProfile {
    pub energies: Vec<f64>,
    /// Set when the sequence fails its compatibility check; monotonicity is
    /// then not guaranteed.
    pub warning: Option<String>,
}

impl EnergyProfile {
    pub fn is_nondecreasing(&self, tol: f64) -> bool {
        self.energies.windows(2).all(|w| w[1] >= w[0] - tol)
    }
}

/// `E_n(f|V_n)` for every level, with `f` given on the top level.
pub fn energy_profile(seq: &CompatibleSequence, f: &[f64]) -> Result<EnergyProfile> {
    let top = seq.top().network.len();
    if f.len() != top {
        return Err(Error::DimensionMismatch { expected: top, got: f.len() });
    }
    let f = FunctionOnV::new(f.to_vec());
    let energies = (0..seq.len())
        .map(|n| energy(&seq.levels[n].form, &f.restrict(&seq.embedding_into_top(n))))
        .collect::<Result<Vec<_>>>()?;
    let warning = match seq.compatibility() {
        Ok(r) if r.accepted() => None,
        Ok(r) => Some(format!(
            "sequence is not compatible (max relative deviation {:e})",
            r.max_relative_deviation()
        )),
        Err(e) => Some(format!("compatibility check failed: {e}")),
    };
    Ok(EnergyProfile { energies, warning })
}

/// Top-level energy and the last increment of the profile. No extrapolation.
pub fn limit_energy_estimate(seq: &CompatibleSequence, f: &[f64]) -> Result<(f64, f64)> {
    if seq.len() < 3 {
        return Err(Error::InvalidSequence(format!(
            "need at least 3 levels for a limit estimate, got {}",
            seq.len()
        )));
    }
    let e = energy_profile(seq, f)?.energies;
    let last = e[e.len() - 1];
    Ok((last, last - e[e.len() - 2]))
}

/// Levels `0..=levels` of the dyadic interval: `V_n = {k 2⁻ⁿ}` with
/// neighbour conductance `2ⁿ` and no killing. Vertices are ordered by
/// position, so the inclusion sends `k` to `2k`.
pub fn build_dyadic_interval(levels: usize) -> Result<CompatibleSequence> {
    if levels > MAX_DYADIC_LEVELS {
        return Err(Error::InvalidArgument(format!(
            "dyadic interval limited to {MAX_DYADIC_LEVELS} levels, got {levels}"
        )));
    }
    let mut networks = Vec::with_capacity(levels + 1);
    let mut inclusions = Vec::with_capacity(levels);
    for n in 0..=levels {
        let cells = 1usize << n;
        let scale = 1.0 / cells as f64;
        let vertices = (0..=cells).map(|k| Value::from(k as f64 * scale)).collect();
        let edges = (0..cells).map(|k| Edge { u: k, v: k + 1, c: cells as f64 }).collect();
        networks.push(Network::new(vertices, edges, None)?);
        if n < levels {
            inclusions.push((0..=cells).map(|k| 2 * k).collect());
        }
    }
    CompatibleSequence::new(networks, inclusions)
}

/// Sierpinski gasket levels `0..=levels` with the standard 5/3 factor.
pub fn build_sierpinski_gasket(levels: usize) -> Result<CompatibleSequence> {
    build_sierpinski_gasket_with_factor(levels, GASKET_FACTOR)
}

/// Gasket levels where every level-`n` edge has conductance `factorⁿ`.
///
/// Vertices of level `n` keep their positions at level `n + 1` and new
/// vertices are appended, so each inclusion is the identity on a prefix.
pub fn build_sierpinski_gasket_with_factor(levels: usize, factor: f64) -> Result<CompatibleSequence> {
    if levels > MAX_GASKET_LEVELS {
        return Err(Error::InvalidArgument(format!(
            "gasket limited to {MAX_GASKET_LEVELS} levels, got {levels}"
        )));
    }
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::InvalidArgument(format!("renormalization factor {factor} must be positive")));
    }
    // Skew lattice coordinates (a, b) at resolution 2ⁿ; corners (0,0), (1,0), (0,1).
    type Point = (u64, u64);
    let mut points: Vec<Point> = vec![(0, 0), (1, 0), (0, 1)];
    let mut cells: Vec<[usize; 3]> = vec![[0, 1, 2]];
    let mut networks = Vec::with_capacity(levels + 1);
    let mut inclusions = Vec::with_capacity(levels);
    for n in 0..=levels {
        let c = factor.powi(n as i32);
        let mut edges = Vec::with_capacity(3 * cells.len());
        for cell in &cells {
            for (i, j) in [(0, 1), (1, 2), (0, 2)] {
                edges.push(Edge { u: cell[i], v: cell[j], c });
            }
        }
        let res = (1u64 << n) as f64;
        let vertices = points
            .iter()
            .map(|&(a, b)| {
                let (a, b) = (a as f64 / res, b as f64 / res);
                Value::from(vec![a + 0.5 * b, b * 3f64.sqrt() / 2.0])
            })
            .collect();
        networks.push(Network::new(vertices, edges, None)?);
        if n == levels {
            break;
        }
        inclusions.push((0..points.len()).collect());

        for p in points.iter_mut() {
            *p = (2 * p.0, 2 * p.1);
        }
        let mut index: HashMap<Point, usize> = points.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        let mut midpoint = |x: usize, y: usize, points: &mut Vec<Point>| -> usize {
            let m = ((points[x].0 + points[y].0) / 2, (points[x].1 + points[y].1) / 2);
            *index.entry(m).or_insert_with(|| {
                points.push(m);
                points.len() - 1
            })
        };
        let mut refined = Vec::with_capacity(3 * cells.len());
        for &[p0, p1, p2] in &cells {
            let m01 = midpoint(p0, p1, &mut points);
            let m12 = midpoint(p1, p2, &mut points);
            let m02 = midpoint(p0, p2, &mut points);
            refined.push([p0, m01, m02]);
            refined.push([m01, p1, m12]);
            refined.push([m02, m12, p2]);
        }
        cells = refined;
    }
    CompatibleSequence::new(networks, inclusions)
}

/// Bisection for the gasket factor making the level-1 trace onto the corners
/// equal the unit triangle.
pub fn calibrate_gasket_factor() -> Result<f64> {
    let mismatch = |r: f64| -> Result<f64> {
        let seq = build_sierpinski_gasket_with_factor(1, r)?;
        let t = trace(&seq.levels[1].form, &seq.inclusions[0])?;
        // traced conductance between two corners minus the level-0 conductance
        Ok(-t.traced_form().get(0, 1) - 1.0)
    };
    let (mut lo, mut hi) = (1.0, 3.0);
    let mut f_lo = mismatch(lo)?;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let f_mid = mismatch(mid)?;
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::effective_resistance;

    fn dyadic_top_values(seq: &CompatibleSequence, f: impl Fn(f64) -> f64) -> Vec<f64> {
        seq.top().network.vertices().iter().map(|v| f(v.as_f64().unwrap())).collect()
    }

    #[test]
    fn dyadic_compatibility_is_exact() {
        let seq = build_dyadic_interval(5).unwrap();
        let r = check_compatibility(&seq, DEFAULT_COMPAT_TOL).unwrap();
        assert_eq!(r.deviations.len(), 5);
        assert!(r.deviations.iter().all(|&d| d <= 1e-12), "{r:?}");
        assert!(r.accepted());
    }

    #[test]
    fn perturbation_is_detected() {
        let seq = build_dyadic_interval(3).unwrap().with_perturbed_edge(0, 0, 1e-3).unwrap();
        let r = check_compatibility(&seq, DEFAULT_COMPAT_TOL).unwrap();
        assert!((r.deviations[0] - 1e-3).abs() < 1e-12, "{r:?}");
        assert!(!r.accepted());
        let p = energy_profile(&seq, &vec![0.0; seq.top().network.len()]).unwrap();
        assert!(p.warning.is_some());
    }

    #[test]
    fn dyadic_profiles() {
        let seq = build_dyadic_interval(8).unwrap();
        let lin = energy_profile(&seq, &dyadic_top_values(&seq, |x| x)).unwrap();
        assert!(lin.warning.is_none());
        assert!(lin.energies.iter().all(|&e| (e - 1.0).abs() < 1e-12), "{lin:?}");

        let sq = energy_profile(&seq, &dyadic_top_values(&seq, |x| x * x)).unwrap();
        // E_n = 4/3 - 1/(3·4ⁿ) in closed form
        for (n, &e) in sq.energies.iter().enumerate() {
            let closed = 4.0 / 3.0 - 1.0 / (3.0 * 4f64.powi(n as i32));
            assert!((e - closed).abs() < 1e-12, "level {n}: {e} vs {closed}");
        }
        assert!(sq.is_nondecreasing(1e-12));

        let zero = energy_profile(&seq, &vec![3.0; seq.top().network.len()]).unwrap();
        assert!(zero.energies.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn limit_estimates() {
        let seq = build_dyadic_interval(8).unwrap();
        let (e, inc) = limit_energy_estimate(&seq, &dyadic_top_values(&seq, |x| x)).unwrap();
        assert!((e - 1.0).abs() < 1e-12 && inc.abs() < 1e-12);
        let (e, inc) = limit_energy_estimate(&seq, &dyadic_top_values(&seq, |_| 2.0)).unwrap();
        assert_eq!((e, inc), (0.0, 0.0));
        let (e, _) = limit_energy_estimate(&seq, &dyadic_top_values(&seq, |x| x * x)).unwrap();
        assert!((e - 4.0 / 3.0).abs() < 1e-2);
        assert!(limit_energy_estimate(&build_dyadic_interval(1).unwrap(), &[0.0; 3]).is_err());
    }

    #[test]
    fn dyadic_endpoint_resistance_is_one() {
        let seq = build_dyadic_interval(6).unwrap();
        for (n, level) in seq.levels().iter().enumerate() {
            let last = level.network.len() - 1;
            let r = effective_resistance(&level.form, 0, last).unwrap();
            assert!((r - 1.0).abs() < 1e-12, "level {n}: {r}");
        }
    }

    #[test]
    fn size_guards() {
        assert!(build_dyadic_interval(21).is_err());
        assert!(build_sierpinski_gasket(9).is_err());
    }

    #[test]
    fn gasket_structure_and_compatibility() {
        let seq = build_sierpinski_gasket(3).unwrap();
        let sizes: Vec<usize> = seq.levels().iter().map(|l| l.network.len()).collect();
        assert_eq!(sizes, vec![3, 6, 15, 42]);
        let edges: Vec<usize> = seq.levels().iter().map(|l| l.network.edges().len()).collect();
        assert_eq!(edges, vec![3, 9, 27, 81]);
        let r = check_compatibility(&seq, DEFAULT_COMPAT_TOL).unwrap();
        assert!(r.deviations[0] <= 1e-12, "{r:?}");
        assert!(r.accepted());

        let level0 = &seq.levels()[0].form;
        assert!((effective_resistance(level0, 0, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let rs: Vec<f64> = seq
            .levels()
            .iter()
            .map(|l| effective_resistance(&l.form, 0, 1).unwrap())
            .collect();
        for w in rs.windows(2) {
            assert!((w[1] / w[0] - 1.0).abs() < 1e-10, "{rs:?}");
        }
    }

    #[test]
    fn wrong_gasket_factor_is_incompatible() {
        let seq = build_sierpinski_gasket_with_factor(2, 1.6).unwrap();
        assert!(!check_compatibility(&seq, DEFAULT_COMPAT_TOL).unwrap().accepted());
    }

    #[test]
    fn calibration_finds_five_thirds() {
        let r = calibrate_gasket_factor().unwrap();
        assert!((r - 5.0 / 3.0).abs() < 1e-6, "{r}");
    }

    #[test]
    fn json_roundtrip_and_errors() {
        let seq = build_dyadic_interval(3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seq.json");
        seq.save(&path).unwrap();
        assert_eq!(CompatibleSequence::load(&path).unwrap(), seq);

        let missing = r#"{"levels":[{"vertices":[0,1],"edges":[{"u":0,"v":1,"c":1}]}]}"#;
        assert!(matches!(CompatibleSequence::from_json_str(missing), Err(Error::InvalidSequence(_))));
        let bad = r#"{"levels":[{"vertices":[0,1]},{"vertices":[0,1,2]}],"inclusions":[[1,1]]}"#;
        let err = CompatibleSequence::from_json_str(bad).unwrap_err();
        assert!(err.to_string().contains("not injective"), "{err}");
    }

    #[test]
    fn hand_written_path_refinement_is_compatible() {
        // unit edge refined into two edges of conductance 2 with the midpoint appended
        let text = r#"{
            "levels": [
                {"vertices": ["a", "b"], "edges": [{"u": 0, "v": 1, "c": 1}]},
                {"vertices": ["a", "b", "m"], "edges": [{"u": 0, "v": 2, "c": 2}, {"u": 2, "v": 1, "c": 2}]}
            ],
            "inclusions": [[0, 1]]
        }"#;
        let seq = CompatibleSequence::from_json_str(text).unwrap();
        let r = check_compatibility(&seq, DEFAULT_COMPAT_TOL).unwrap();
        assert!(r.deviations[0] < 1e-15, "{r:?}");
    }
}
