//! Seeded random inputs for the reproduction experiments.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use resform::network::{Edge, Network};

/// Whether generated networks carry killing weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Killing {
    None,
    Some,
}

/// Log-uniform conductance in `[0.1, 10]`.
fn conductance(rng: &mut ChaCha8Rng) -> f64 {
    10f64.powf(rng.random_range(-1.0..1.0))
}

/// Random network on `2..=max_n` vertices. With `connected`, a random
/// spanning tree is laid down first; extra edges appear with a random density.
pub fn network(rng: &mut ChaCha8Rng, max_n: usize, connected: bool, killing: Killing) -> Network {
    let n = rng.random_range(2..=max_n);
    let density: f64 = rng.random_range(0.05..0.6);
    let mut pairs = BTreeMap::new();
    if connected {
        for i in 1..n {
            let p = rng.random_range(0..i);
            pairs.insert((p, i), conductance(rng));
        }
    }
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < density {
                let c = conductance(rng);
                pairs.entry((u, v)).or_insert(c);
            }
        }
    }
    let edges = pairs.into_iter().map(|((u, v), c)| Edge { u, v, c }).collect();
    let killing = match killing {
        Killing::None => None,
        Killing::Some => Some(
            (0..n)
                .map(|_| if rng.random::<bool>() { rng.random_range(0.0..3.0) } else { 0.0 })
                .collect(),
        ),
    };
    Network::with_indices(n, edges, killing).expect("generated networks are valid")
}

pub fn vector(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Sorted random subset of `from` containing each element with probability
/// `p`, never empty.
pub fn subset(rng: &mut ChaCha8Rng, from: &[usize], p: f64) -> Vec<usize> {
    let mut out: Vec<usize> = from.iter().copied().filter(|_| rng.random::<f64>() < p).collect();
    if out.is_empty() {
        out.push(from[rng.random_range(0..from.len())]);
    }
    out
}
