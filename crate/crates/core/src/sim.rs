//! The reversible continuous-time chain of a Markov form and a measure.
//!
//! With conductances `c(x, y)`, killing `κ(x)` and an everywhere positive
//! measure `μ`, the chain jumps `x → y` at rate `c(x, y) / μ(x)` and moves to
//! an absorbing cemetery at rate `κ(x) / μ(x)`. It is `μ`-symmetric.
//!
//! Every trajectory draws from its own ChaCha stream selected by
//! `(seed, trajectory index)`, and per-trajectory outputs are reduced in index
//! order, so results do not depend on the rayon thread count.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::form::{require_markov, AtomicMeasure, FormMatrix};
use crate::linalg::{components, pairwise_sum};

#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    mu: Vec<f64>,
    conductance: DMatrix<f64>,
    rates: DMatrix<f64>,
    killing_rates: Vec<f64>,
    holding: Vec<f64>,
    /// Outgoing `(target, rate)` pairs per state, ascending target.
    jumps: Vec<Vec<(usize, f64)>>,
}

/// Position of a trajectory: a vertex or the cemetery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum State {
    Vertex(usize),
    Cemetery,
}

impl GeneratorSpec {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Jump rate `q(x, y) = c(x, y) / μ(x)`.
    pub fn rate(&self, x: usize, y: usize) -> f64 {
        self.rates[(x, y)]
    }

    pub fn killing_rates(&self) -> &[f64] {
        &self.killing_rates
    }

    /// Total exit rate `λ(x) = Σ_y q(x, y) + k(x)`.
    pub fn holding(&self, x: usize) -> f64 {
        self.holding[x]
    }

    /// Probability flux `μ(x) q(x, y)`.
    pub fn flux(&self, x: usize, y: usize) -> f64 {
        self.mu[x] * self.rates[(x, y)]
    }

    /// `max |μ(x) q(x,y) - μ(y) q(y,x)|` relative to the largest conductance.
    ///
    /// The stored conductances are exactly symmetric; the products differ
    /// only by the rounding of `c / μ` and back, at most a few ulps.
    pub fn detailed_balance_defect(&self) -> f64 {
        let n = self.dim();
        let cmax = self.conductance.iter().fold(0.0, |m: f64, v| m.max(*v));
        if cmax == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for x in 0..n {
            for y in 0..n {
                worst = worst.max((self.flux(x, y) - self.flux(y, x)).abs());
            }
        }
        worst / cmax
    }

    fn is_conservative(&self) -> Result<()> {
        match self.killing_rates.iter().position(|&k| k > 0.0) {
            None => Ok(()),
            Some(x) => Err(Error::KillingPresent { vertex: x, killing: self.killing_rates[x] * self.mu[x] }),
        }
    }

    fn components(&self) -> Vec<Vec<usize>> {
        components(self.dim(), |x| self.jumps[x].iter().map(|&(y, _)| y).collect::<Vec<_>>())
    }

    fn check_vertex(&self, x: usize) -> Result<()> {
        if x >= self.dim() {
            return Err(Error::IndexOutOfRange { index: x, len: self.dim() });
        }
        Ok(())
    }

    /// One holding period: the exponential holding time and the next state.
    /// States with zero exit rate hold forever.
    pub fn step<R: Rng>(&self, x: usize, rng: &mut R) -> (f64, State) {
        let lambda = self.holding[x];
        if lambda == 0.0 {
            return (f64::INFINITY, State::Vertex(x));
        }
        let e: f64 = rng.sample(Exp1);
        (e / lambda, self.jump(x, rng))
    }

    /// Next state of the embedded jump chain.
    pub fn jump<R: Rng>(&self, x: usize, rng: &mut R) -> State {
        let lambda = self.holding[x];
        let mut u = rng.random::<f64>() * lambda;
        if u < self.killing_rates[x] {
            return State::Cemetery;
        }
        u -= self.killing_rates[x];
        let targets = &self.jumps[x];
        for &(y, q) in targets {
            if u < q {
                return State::Vertex(y);
            }
            u -= q;
        }
        match targets.last() {
            Some(&(y, _)) => State::Vertex(y),
            None => State::Cemetery,
        }
    }
}

/// Rates from a Markov form and an everywhere positive measure.
pub fn build_generator(a: &FormMatrix, mu: &AtomicMeasure) -> Result<GeneratorSpec> {
    require_markov(a)?;
    let n = a.dim();
    if mu.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: mu.len() });
    }
    if let Some(x) = mu.weights().iter().position(|&w| w <= 0.0) {
        return Err(Error::ZeroMass(x));
    }
    let mu = mu.weights().to_vec();
    let conductance = DMatrix::from_fn(n, n, |x, y| if x == y { 0.0 } else { a.conductance(x, y).max(0.0) });
    let rates = DMatrix::from_fn(n, n, |x, y| conductance[(x, y)] / mu[x]);
    let killing_rates: Vec<f64> = a
        .row_sums()
        .into_iter()
        .zip(&mu)
        .map(|(k, m)| if k > 1e-10 * a.scale() { k / m } else { 0.0 })
        .collect();
    let jumps: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|x| (0..n).filter(|&y| rates[(x, y)] > 0.0).map(|y| (y, rates[(x, y)])).collect())
        .collect();
    let holding = (0..n)
        .map(|x| jumps[x].iter().map(|&(_, q)| q).sum::<f64>() + killing_rates[x])
        .collect();
    Ok(GeneratorSpec { mu, conductance, rates, killing_rates, holding, jumps })
}

/// Per-trajectory random stream.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Mean with its standard error `sample std / √n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Estimate {
        let n = samples.len();
        if n == 0 {
            return Estimate { mean: f64::NAN, se: f64::NAN };
        }
        let mean = pairwise_sum(samples) / n as f64;
        if n == 1 {
            return Estimate { mean, se: 0.0 };
        }
        let sq: Vec<f64> = samples.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = pairwise_sum(&sq) / (n - 1) as f64;
        Estimate { mean, se: (var / n as f64).sqrt() }
    }

    pub fn exact(v: f64) -> Estimate {
        Estimate { mean: v, se: 0.0 }
    }

    /// Distance to `target` in standard errors (infinite if `se = 0` and the
    /// mean differs).
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.se
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub n_trajectories: usize,
    pub horizon: f64,
    /// Fraction of the horizon spent at each vertex.
    pub occupation: Vec<Estimate>,
    /// Fraction of trajectories absorbed in the cemetery before the horizon.
    pub killed_fraction: Estimate,
}

fn check_runs(n_traj: usize) -> Result<()> {
    if n_traj == 0 {
        return Err(Error::InvalidArgument("need at least one trajectory".into()));
    }
    Ok(())
}

/// Runs `x0` forward to `horizon`, recording occupation times; `time[n]` is
/// the time in the cemetery. Returns whether the trajectory was killed.
fn run_until(gen: &GeneratorSpec, x0: usize, horizon: f64, rng: &mut ChaCha8Rng, time: &mut [f64]) -> bool {
    let mut t = 0.0;
    let mut x = x0;
    loop {
        let (hold, next) = gen.step(x, rng);
        if t + hold >= horizon {
            time[x] += horizon - t;
            return false;
        }
        time[x] += hold;
        t += hold;
        match next {
            State::Vertex(y) => x = y,
            State::Cemetery => {
                time[gen.dim()] += horizon - t;
                return true;
            }
        }
    }
}

fn occupation_estimates(per_traj: &[(Vec<f64>, bool)], n: usize, horizon: f64) -> (Vec<Estimate>, Estimate) {
    let occupation = (0..n)
        .map(|x| {
            let samples: Vec<f64> = per_traj.iter().map(|(t, _)| t[x] / horizon).collect();
            Estimate::from_samples(&samples)
        })
        .collect();
    let killed: Vec<f64> = per_traj.iter().map(|&(_, k)| if k { 1.0 } else { 0.0 }).collect();
    (occupation, Estimate::from_samples(&killed))
}

/// Simulates `n_traj` trajectories from `x0` up to `horizon`.
pub fn simulate(gen: &GeneratorSpec, x0: usize, horizon: f64, n_traj: usize, seed: u64) -> Result<SimResult> {
    gen.check_vertex(x0)?;
    check_runs(n_traj)?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let n = gen.dim();
    let per_traj: Vec<(Vec<f64>, bool)> = (0..n_traj as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(seed, i);
            let mut time = vec![0.0; n + 1];
            let killed = run_until(gen, x0, horizon, &mut rng, &mut time);
            (time, killed)
        })
        .collect();
    let (occupation, killed_fraction) = occupation_estimates(&per_traj, n, horizon);
    Ok(SimResult { n_trajectories: n_traj, horizon, occupation, killed_fraction })
}

fn reachable_from(gen: &GeneratorSpec, x0: usize) -> Vec<bool> {
    let mut seen = vec![false; gen.dim()];
    seen[x0] = true;
    let mut stack = vec![x0];
    while let Some(x) = stack.pop() {
        for &(y, _) in &gen.jumps[x] {
            if !std::mem::replace(&mut seen[y], true) {
                stack.push(y);
            }
        }
    }
    seen
}

/// Estimates `P_{x0}(hit a before b)` from the jump chain.
pub fn hitting_probability(
    gen: &GeneratorSpec,
    a: usize,
    b: usize,
    x0: usize,
    n_traj: usize,
    seed: u64,
) -> Result<Estimate> {
    for v in [a, b, x0] {
        gen.check_vertex(v)?;
    }
    if a == b {
        return Err(Error::SameVertex(a));
    }
    check_runs(n_traj)?;
    gen.is_conservative()?;
    let reach = reachable_from(gen, x0);
    if !reach[a] && !reach[b] {
        return Err(Error::Unreachable { from: x0 });
    }
    if x0 == a || x0 == b {
        return Ok(Estimate::exact(if x0 == a { 1.0 } else { 0.0 }));
    }
    let hits: Vec<f64> = (0..n_traj as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(seed, i);
            let mut x = x0;
            loop {
                match gen.jump(x, &mut rng) {
                    State::Vertex(y) if y == a => return 1.0,
                    State::Vertex(y) if y == b => return 0.0,
                    State::Vertex(y) => x = y,
                    State::Cemetery => unreachable!("conservative chain has no cemetery moves"),
                }
            }
        })
        .collect();
    Ok(Estimate::from_samples(&hits))
}

fn hitting_time(gen: &GeneratorSpec, from: usize, to: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut t = 0.0;
    let mut x = from;
    while x != to {
        let (hold, next) = gen.step(x, rng);
        t += hold;
        match next {
            State::Vertex(y) => x = y,
            State::Cemetery => unreachable!("conservative chain has no cemetery moves"),
        }
    }
    t
}

/// Estimates the commute time `E_x T_y + E_y T_x`.
pub fn commute_time(gen: &GeneratorSpec, x: usize, y: usize, n_traj: usize, seed: u64) -> Result<Estimate> {
    gen.check_vertex(x)?;
    gen.check_vertex(y)?;
    check_runs(n_traj)?;
    gen.is_conservative()?;
    if x == y {
        return Ok(Estimate::exact(0.0));
    }
    if !reachable_from(gen, x)[y] {
        return Err(Error::Unreachable { from: x });
    }
    let samples: Vec<f64> = (0..n_traj as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(seed, i);
            hitting_time(gen, x, y, &mut rng) + hitting_time(gen, y, x, &mut rng)
        })
        .collect();
    Ok(Estimate::from_samples(&samples))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationReport {
    pub l1_distance: f64,
    /// Sum over vertices of two standard errors of the occupation fractions.
    pub band: f64,
    pub empirical: Vec<Estimate>,
    pub target: Vec<f64>,
}

/// L¹ distance between mean occupation fractions and `μ / μ(V)`, starting
/// each trajectory from a `μ`-distributed state.
pub fn occupation_check(gen: &GeneratorSpec, horizon: f64, n_traj: usize, seed: u64) -> Result<OccupationReport> {
    check_runs(n_traj)?;
    gen.is_conservative()?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let comps = gen.components();
    if comps.len() > 1 {
        return Err(Error::Reducible(comps));
    }
    let n = gen.dim();
    let total: f64 = gen.mu.iter().sum();
    let target: Vec<f64> = gen.mu.iter().map(|m| m / total).collect();
    let per_traj: Vec<(Vec<f64>, bool)> = (0..n_traj as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(seed, i);
            let mut u = rng.random::<f64>();
            let mut x0 = n - 1;
            for (x, &p) in target.iter().enumerate() {
                if u < p {
                    x0 = x;
                    break;
                }
                u -= p;
            }
            let mut time = vec![0.0; n + 1];
            let killed = run_until(gen, x0, horizon, &mut rng, &mut time);
            (time, killed)
        })
        .collect();
    let (empirical, _) = occupation_estimates(&per_traj, n, horizon);
    let l1_distance = empirical.iter().zip(&target).map(|(e, t)| (e.mean - t).abs()).sum();
    let band = empirical.iter().map(|e| 2.0 * e.se).sum();
    Ok(OccupationReport { l1_distance, band, empirical, target })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::assemble;
    use crate::network::{Edge, Network};

    fn form(n: usize, edges: &[(usize, usize, f64)], killing: Option<Vec<f64>>) -> FormMatrix {
        assemble(&Network::with_indices(n, edges.iter().map(|&(u, v, c)| Edge { u, v, c }).collect(), killing).unwrap())
    }

    #[test]
    fn generator_examples() {
        let edge = form(2, &[(0, 1, 1.0)], None);
        let g = build_generator(&edge, &AtomicMeasure::counting(2)).unwrap();
        assert_eq!((g.rate(0, 1), g.rate(1, 0)), (1.0, 1.0));

        let g = build_generator(&edge, &AtomicMeasure::new(vec![2.0, 1.0]).unwrap()).unwrap();
        assert_eq!((g.rate(0, 1), g.rate(1, 0)), (0.5, 1.0));
        assert_eq!(g.flux(0, 1), g.flux(1, 0));

        let killed = form(2, &[(0, 1, 1.0)], Some(vec![1.0, 0.0]));
        let g = build_generator(&killed, &AtomicMeasure::counting(2)).unwrap();
        assert_eq!(g.killing_rates(), &[1.0, 0.0]);
        assert_eq!(g.holding(0), 2.0);
    }

    #[test]
    fn zero_mass_rejected() {
        let edge = form(2, &[(0, 1, 1.0)], None);
        let err = build_generator(&edge, &AtomicMeasure::new(vec![1.0, 0.0]).unwrap()).unwrap_err();
        assert_eq!(err, Error::ZeroMass(1));
    }

    #[test]
    fn detailed_balance_on_awkward_measure() {
        let a = form(3, &[(0, 1, 0.3), (1, 2, 1.7), (0, 2, 2.9)], None);
        let g = build_generator(&a, &AtomicMeasure::new(vec![0.1, 3.0, 7.0 / 3.0]).unwrap()).unwrap();
        assert!(g.detailed_balance_defect() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn conservative_chain_is_never_killed() {
        let a = form(3, &[(0, 1, 1.0), (1, 2, 1.0)], None);
        let g = build_generator(&a, &AtomicMeasure::counting(3)).unwrap();
        let r = simulate(&g, 0, 5.0, 200, 1).unwrap();
        assert_eq!(r.killed_fraction.mean, 0.0);
        let total: f64 = r.occupation.iter().map(|e| e.mean).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_killing_survival() {
        let a = form(1, &[], Some(vec![1.0]));
        let g = build_generator(&a, &AtomicMeasure::counting(1)).unwrap();
        let r = simulate(&g, 0, 10.0, 20_000, 3).unwrap();
        let expected = 1.0 - (-10.0f64).exp();
        // se is ~0 here, so compare with the binomial standard error instead
        let se = (expected * (1.0 - expected) / 20_000.0).sqrt().max(1e-6);
        assert!((r.killed_fraction.mean - expected).abs() <= 4.0 * se + 1e-4, "{r:?}");
    }

    #[test]
    fn hitting_examples() {
        let path = form(3, &[(0, 1, 1.0), (1, 2, 1.0)], None);
        let g = build_generator(&path, &AtomicMeasure::counting(3)).unwrap();
        let est = hitting_probability(&g, 0, 2, 1, 20_000, 9).unwrap();
        assert!(est.z_score(0.5) < 4.0, "{est:?}");
        assert_eq!(hitting_probability(&g, 0, 2, 0, 10, 9).unwrap(), Estimate::exact(1.0));

        let tri = form(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], None);
        let g = build_generator(&tri, &AtomicMeasure::counting(3)).unwrap();
        let est = hitting_probability(&g, 0, 1, 2, 20_000, 10).unwrap();
        assert!(est.z_score(0.5) < 4.0, "{est:?}");
    }

    #[test]
    fn hitting_errors() {
        let split = form(4, &[(0, 1, 1.0), (2, 3, 1.0)], None);
        let g = build_generator(&split, &AtomicMeasure::counting(4)).unwrap();
        assert_eq!(hitting_probability(&g, 0, 1, 2, 10, 0), Err(Error::Unreachable { from: 2 }));
        assert_eq!(hitting_probability(&g, 0, 0, 1, 10, 0), Err(Error::SameVertex(0)));
        let killed = form(2, &[(0, 1, 1.0)], Some(vec![0.5, 0.0]));
        let g = build_generator(&killed, &AtomicMeasure::counting(2)).unwrap();
        assert!(matches!(hitting_probability(&g, 0, 1, 0, 10, 0), Err(Error::KillingPresent { .. })));
    }

    #[test]
    fn two_state_commute_time() {
        let edge = form(2, &[(0, 1, 1.0)], None);
        let g = build_generator(&edge, &AtomicMeasure::new(vec![2.0, 0.5]).unwrap()).unwrap();
        // E_0 T_1 = 1/q01 = μ0 and E_1 T_0 = μ1
        let est = commute_time(&g, 0, 1, 40_000, 5).unwrap();
        assert!(est.z_score(2.5) < 4.0, "{est:?}");
        assert_eq!(commute_time(&g, 1, 1, 10, 5).unwrap(), Estimate::exact(0.0));
    }

    #[test]
    fn occupation_examples() {
        let edge = form(2, &[(0, 1, 1.0)], None);
        let g = build_generator(&edge, &AtomicMeasure::counting(2)).unwrap();
        let r = occupation_check(&g, 1000.0, 100, 11).unwrap();
        assert!(r.l1_distance < 0.02, "{r:?}");

        let g = build_generator(&edge, &AtomicMeasure::new(vec![2.0, 1.0]).unwrap()).unwrap();
        let r = occupation_check(&g, 200.0, 200, 12).unwrap();
        assert!((r.target[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!(r.l1_distance <= 2.0 * r.band, "{r:?}");

        let single = form(1, &[], None);
        let g = build_generator(&single, &AtomicMeasure::counting(1)).unwrap();
        assert_eq!(occupation_check(&g, 10.0, 5, 0).unwrap().l1_distance, 0.0);

        let split = form(3, &[(0, 1, 1.0)], None);
        let g = build_generator(&split, &AtomicMeasure::counting(3)).unwrap();
        assert_eq!(occupation_check(&g, 1.0, 1, 0), Err(Error::Reducible(vec![vec![0, 1], vec![2]])));
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let tri = form(3, &[(0, 1, 1.0), (1, 2, 2.0), (0, 2, 0.5)], None);
        let g = build_generator(&tri, &AtomicMeasure::new(vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| (simulate(&g, 0, 20.0, 500, 77).unwrap(), commute_time(&g, 0, 2, 500, 77).unwrap()))
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.mean.to_bits(), b.1.mean.to_bits());
        assert_eq!(a.1.se.to_bits(), b.1.se.to_bits());
    }
}
