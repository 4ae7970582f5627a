//! Pointwise energy measures.
//!
//! For a Markov form the energy measure of `f` is the measure `Γ(f)` with
//! `2 Σ_x φ(x) Γ(f)({x}) = 2 E(φ f, f) - E(φ, f²)` for every `φ`. On a
//! finite set it has the closed form
//! `Γ(f)({x}) = ½ Σ_y c(x,y) (f(x) - f(y))² + ½ κ(x) f(x)²`,
//! so `Σ_x Γ(f)({x}) = E(f, f) - ½ Σ_x κ(x) f(x)²`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fmt::fmt17;
use crate::form::{evaluate, require_markov, FormMatrix, FunctionOnV};
use crate::gelfand::EmbeddingResult;
use crate::sequence::build_dyadic_interval;

/// Masses more negative than this (times the scale) are errors, not rounding.
pub const NEGATIVE_MASS_TOL: f64 = 1e-14;

/// Tolerance for the closed form vs defining identity cross-check.
pub const CROSS_CHECK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMeasure {
    masses: Vec<f64>,
    total: f64,
}

impl EnergyMeasure {
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// `Γ(S)` for a set of vertex indices.
    pub fn mass_of(&self, set: &[usize]) -> f64 {
        set.iter().map(|&x| self.masses[x]).sum()
    }

    fn from_masses(masses: Vec<f64>) -> Self {
        let total = masses.iter().sum();
        EnergyMeasure { masses, total }
    }
}

fn energy_scale(a: &FormMatrix, f: &[f64]) -> f64 {
    let s = f.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    a.scale() * s * s
}

/// Per-vertex masses from the closed form, unclamped.
pub fn closed_form_masses(a: &FormMatrix, f: &[f64]) -> Result<Vec<f64>> {
    let n = a.dim();
    if f.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: f.len() });
    }
    let kappa = a.row_sums();
    Ok((0..n)
        .map(|x| {
            let mut jump = 0.0;
            for y in (0..n).filter(|&y| y != x) {
                let d = f[x] - f[y];
                jump += a.conductance(x, y) * d * d;
            }
            0.5 * jump + 0.5 * kappa[x] * f[x] * f[x]
        })
        .collect())
}

/// Per-vertex masses from the defining identity with `φ = 1_x`:
/// `E(1_x f, f) - ½ E(1_x, f²)`.
pub fn identity_masses(a: &FormMatrix, f: &[f64]) -> Result<Vec<f64>> {
    let n = a.dim();
    let f_sq: Vec<f64> = f.iter().map(|v| v * v).collect();
    (0..n)
        .map(|x| {
            let ind = FunctionOnV::indicator(n, x);
            Ok(evaluate(a, &ind.mul(&FunctionOnV::new(f.to_vec())), f)? - 0.5 * evaluate(a, &ind, &f_sq)?)
        })
        .collect()
}

/// Energy measure of `f`, computed by the closed form and cross-checked
/// against the defining identity.
pub fn energy_measure(a: &FormMatrix, f: &[f64]) -> Result<EnergyMeasure> {
    require_markov(a)?;
    let closed = closed_form_masses(a, f)?;
    let identity = identity_masses(a, f)?;
    let scale = energy_scale(a, f);
    for (x, (&c, &i)) in closed.iter().zip(&identity).enumerate() {
        if (c - i).abs() > CROSS_CHECK_TOL * scale {
            return Err(Error::EnergyCrossCheck { vertex: x, closed: c, identity: i });
        }
    }
    let masses = closed
        .into_iter()
        .enumerate()
        .map(|(x, m)| {
            if m >= 0.0 {
                Ok(m)
            } else if m >= -NEGATIVE_MASS_TOL * scale {
                Ok(0.0)
            } else {
                Err(Error::NegativeMass { vertex: x, mass: m })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnergyMeasure::from_masses(masses))
}

/// Both sides of `2 ∫ φ dΓ(f) = 2 E(φ f, f) - E(φ, f²)`.
pub fn test_identity(a: &FormMatrix, f: &[f64], phi: &[f64]) -> Result<(f64, f64)> {
    if phi.len() != a.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: phi.len() });
    }
    let gamma = energy_measure(a, f)?;
    let lhs = 2.0 * phi.iter().zip(gamma.masses()).map(|(p, g)| p * g).sum::<f64>();
    let f_sq: Vec<f64> = f.iter().map(|v| v * v).collect();
    let phi_f: Vec<f64> = phi.iter().zip(f).map(|(p, v)| p * v).collect();
    let rhs = 2.0 * evaluate(a, &phi_f, f)? - evaluate(a, phi, &f_sq)?;
    Ok((lhs, rhs))
}

/// Image of an energy measure under the quotient map: class masses are sums
/// of point masses.
pub fn pushforward_gamma(gamma: &EnergyMeasure, emb: &EmbeddingResult) -> Result<EnergyMeasure> {
    let n = emb.class_of().len();
    if gamma.masses.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: gamma.masses.len() });
    }
    let mut masses = vec![0.0; emb.classes().len()];
    for (x, &m) in gamma.masses.iter().enumerate() {
        masses[emb.class_of()[x]] += m;
    }
    Ok(EnergyMeasure::from_masses(masses))
}

/// One row of the escaping-mass table.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleRow {
    pub level: usize,
    pub energy: f64,
    pub set_mass: f64,
}

/// For the dyadic interval levels `min_level..=max_level` and `f` sampled at
/// the vertices, tabulates `E_n(f)` and `Γ_n(f)(S)` for a fixed set `S` of
/// level-`min_level` dyadic points.
///
/// With `f(x) = x` the energy stays 1 while the mass on `S` halves every
/// level: energy escapes every fixed finite set.
pub fn counterexample_table(
    min_level: usize,
    max_level: usize,
    set: &[f64],
    f: impl Fn(f64) -> f64,
) -> Result<Vec<CounterexampleRow>> {
    if min_level > max_level {
        return Err(Error::InvalidArgument(format!("level range {min_level}..={max_level} is empty")));
    }
    let coarse = (1u64 << min_level) as f64;
    for &s in set {
        let k = s * coarse;
        if !(0.0..=1.0).contains(&s) || k.fract() != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "point {s} is not a dyadic point of level {min_level}"
            )));
        }
    }
    let seq = build_dyadic_interval(max_level)?;
    (min_level..=max_level)
        .map(|n| {
            let level = &seq.levels()[n];
            let values: Vec<f64> = level
                .network
                .vertices()
                .iter()
                .map(|v| f(v.as_f64().expect("dyadic labels are positions")))
                .collect();
            let res = (1u64 << n) as f64;
            let indices: Vec<usize> = set.iter().map(|&s| (s * res) as usize).collect();
            let gamma = energy_measure(&level.form, &values)?;
            Ok(CounterexampleRow {
                level: n,
                energy: evaluate(&level.form, &values, &values)?,
                set_mass: gamma.mass_of(&indices),
            })
        })
        .collect()
}

/// The table for `f(x) = x`.
pub fn counterexample_demo(min_level: usize, max_level: usize, set: &[f64]) -> Result<Vec<CounterexampleRow>> {
    counterexample_table(min_level, max_level, set, |x| x)
}

pub fn counterexample_csv(rows: &[CounterexampleRow]) -> String {
    let mut out = String::from("level,energy,set_mass\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.level, fmt17(r.energy), fmt17(r.set_mass));
    }
    out
}

/// Minimal SVG plot of `log2 Γ_n(S)` and `log2 E_n` against the level.
pub fn counterexample_svg(rows: &[CounterexampleRow]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const PAD: f64 = 40.0;
    let log = |v: f64| if v > 0.0 { v.log2() } else { f64::NEG_INFINITY };
    let ys: Vec<f64> = rows
        .iter()
        .flat_map(|r| [log(r.energy), log(r.set_mass)])
        .filter(|v| v.is_finite())
        .collect();
    let (y_lo, y_hi) = ys
        .iter()
        .fold((0.0f64, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let y_span = if y_hi > y_lo { y_hi - y_lo } else { 1.0 };
    let (x_lo, x_hi) = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => (a.level as f64, b.level as f64),
        _ => (0.0, 1.0),
    };
    let x_span = if x_hi > x_lo { x_hi - x_lo } else { 1.0 };
    let px = |l: usize| PAD + (l as f64 - x_lo) / x_span * (W - 2.0 * PAD);
    let py = |v: f64| H - PAD - (v - y_lo) / y_span * (H - 2.0 * PAD);
    let polyline = |sel: &dyn Fn(&CounterexampleRow) -> f64| -> String {
        rows.iter()
            .filter(|r| log(sel(r)).is_finite())
            .map(|r| format!("{:.2},{:.2}", px(r.level), py(log(sel(r)))))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="steelblue" points="{}"/>"#,
        polyline(&|r| r.energy)
    );
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="firebrick" points="{}"/>"#,
        polyline(&|r| r.set_mass)
    );
    let _ = writeln!(svg, r#"<text x="{PAD}" y="{}" font-size="12">level</text>"#, H - 10.0);
    let _ = writeln!(svg, r#"<text x="4" y="{}" font-size="12">log2</text>"#, PAD - 10.0);
    svg.push_str("</svg>\n");
    svg
}
