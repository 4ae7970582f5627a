//! Finite weighted networks: the jump weights and killing weights that
//! carry a finite Dirichlet form.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// An undirected edge `{u, v}` with conductance `c > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub c: f64,
}

#[derive(Deserialize)]
struct RawNetwork {
    vertices: Vec<Value>,
    #[serde(default)]
    edges: Vec<Edge>,
    #[serde(default)]
    killing: Option<Vec<f64>>,
}

/// A finite network with conductances on edges and killing weights on
/// vertices.
///
/// Vertices are identified by their position; labels are carried along as
/// opaque JSON values and never interpreted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Network {
    vertices: Vec<Value>,
    edges: Vec<Edge>,
    killing: Vec<f64>,
}

impl Network {
    /// Validates and builds a network. `killing` defaults to zeros.
    pub fn new(vertices: Vec<Value>, edges: Vec<Edge>, killing: Option<Vec<f64>>) -> Result<Self> {
        let n = vertices.len();
        let killing = killing.unwrap_or_else(|| vec![0.0; n]);
        if killing.len() != n {
            return Err(Error::InvalidNetwork(format!(
                "killing has {} entries for {} vertices",
                killing.len(),
                n
            )));
        }
        let mut seen = BTreeSet::new();
        for (i, e) in edges.iter().enumerate() {
            if e.u >= n || e.v >= n {
                return Err(Error::InvalidNetwork(format!(
                    "edge {i} ({}, {}) references a vertex outside 0..{n}",
                    e.u, e.v
                )));
            }
            if e.u == e.v {
                return Err(Error::InvalidNetwork(format!("edge {i} is a self-loop at vertex {}", e.u)));
            }
            if !e.c.is_finite() || e.c <= 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "edge {i} ({}, {}) has non-positive conductance {}",
                    e.u, e.v, e.c
                )));
            }
            if !seen.insert((e.u.min(e.v), e.u.max(e.v))) {
                return Err(Error::InvalidNetwork(format!(
                    "edge {i} duplicates the pair ({}, {})",
                    e.u, e.v
                )));
            }
        }
        for (x, &k) in killing.iter().enumerate() {
            if !k.is_finite() || k < 0.0 {
                return Err(Error::InvalidNetwork(format!("vertex {x} has negative killing weight {k}")));
            }
        }
        Ok(Network { vertices, edges, killing })
    }

    /// Network on `n` vertices labelled `0..n`.
    pub fn with_indices(n: usize, edges: Vec<Edge>, killing: Option<Vec<f64>>) -> Result<Self> {
        Self::new((0..n).map(Value::from).collect(), edges, killing)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawNetwork = serde_json::from_str(text).map_err(|e| json_error(text, &e))?;
        Self::new(raw.vertices, raw.edges, raw.killing)
    }

    pub fn to_json_value(&self) -> Value {
        serde_json::to_value(self).expect("network serializes")
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[Value] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn killing(&self) -> &[f64] {
        &self.killing
    }

    /// Copy of the network with edges sorted by `(min, max)` endpoint and
    /// oriented `u < v`.
    pub fn canonicalized(&self) -> Network {
        let mut edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|e| Edge { u: e.u.min(e.v), v: e.u.max(e.v), c: e.c })
            .collect();
        edges.sort_by_key(|e| (e.u, e.v));
        Network { vertices: self.vertices.clone(), edges, killing: self.killing.clone() }
    }

    /// Connected components of the edge graph, each sorted, ordered by
    /// smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adjacency = |x: usize| -> Vec<usize> {
            self.edges
                .iter()
                .filter_map(|e| {
                    if e.u == x {
                        Some(e.v)
                    } else if e.v == x {
                        Some(e.u)
                    } else {
                        None
                    }
                })
                .collect()
        };
        crate::linalg::components(self.len(), adjacency)
    }
}

/// Converts a serde_json error into a parse error carrying the byte offset.
pub(crate) fn json_error(text: &str, e: &serde_json::Error) -> Error {
    let offset = byte_offset(text, e.line(), e.column());
    Error::Parse(format!("{e} (byte offset {offset})"))
}

/// Byte offset of a 1-based (line, column) position.
pub fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn killing_defaults_to_zero() {
        let net = Network::from_json_str(r#"{"vertices":["a","b"],"edges":[{"u":0,"v":1,"c":1.5}]}"#).unwrap();
        assert_eq!(net.killing(), &[0.0, 0.0]);
        assert_eq!(net.vertices()[0], Value::from("a"));
    }

    #[test]
    fn rejects_duplicate_edge() {
        let edges = vec![Edge { u: 0, v: 1, c: 1.0 }, Edge { u: 1, v: 0, c: 2.0 }];
        let err = Network::with_indices(2, edges, None).unwrap_err();
        assert!(err.to_string().contains("edge 1 duplicates"), "{err}");
    }

    #[test]
    fn rejects_self_loop_and_bad_weights() {
        assert!(Network::with_indices(2, vec![Edge { u: 1, v: 1, c: 1.0 }], None).is_err());
        let err = Network::with_indices(2, vec![Edge { u: 0, v: 1, c: 0.0 }], None).unwrap_err();
        assert!(err.to_string().contains("conductance 0"), "{err}");
        let err = Network::with_indices(2, vec![], Some(vec![0.0, -1.0])).unwrap_err();
        assert!(err.to_string().contains("vertex 1"), "{err}");
        assert!(Network::with_indices(2, vec![Edge { u: 0, v: 2, c: 1.0 }], None).is_err());
    }

    #[test]
    fn parse_error_reports_byte_offset() {
        let text = "{\"vertices\": [1,2],\n \"edges\": [oops]}";
        let err = Network::from_json_str(text).unwrap_err();
        let msg = err.to_string();
        let pos = text.find("oops").unwrap();
        assert!(msg.contains(&format!("byte offset {pos}")), "{msg}");
    }

    #[test]
    fn components_of_two_islands() {
        let net = Network::with_indices(
            4,
            vec![Edge { u: 0, v: 2, c: 1.0 }, Edge { u: 3, v: 1, c: 1.0 }],
            None,
        )
        .unwrap();
        assert_eq!(net.components(), vec![vec![0, 2], vec![1, 3]]);
    }
}
