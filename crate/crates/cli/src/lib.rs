//! Command-line front end for `resform`.
//!
//! [`run`] executes a parsed [`Cli`] and returns the text that belongs on
//! stdout; the binary maps errors to exit codes.

pub mod output;
pub mod random;
pub mod reproduce;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use resform::beurling_deny::decompose;
use resform::energy::{counterexample_csv, counterexample_demo, counterexample_svg, energy_measure};
use resform::form::{assemble, is_markov, require_markov, AtomicMeasure, FormMatrix, FunctionOnV, DEFAULT_TOL};
use resform::gelfand::{embed, l2_isometry_check, pushforward, spectrum_closure_estimate, vanishes_nowhere, AlgebraSpec};
use resform::sequence::{
    build_dyadic_interval, build_sierpinski_gasket_with_factor, calibrate_gasket_factor, check_compatibility,
    energy_profile, CompatibleSequence, DEFAULT_COMPAT_TOL, GASKET_FACTOR,
};
use resform::sim::{build_generator, commute_time, hitting_probability, occupation_check, GeneratorSpec};
use resform::trace::{effective_resistance, resistance_matrix, trace};
use resform::{Error, Network, Result};
use serde_json::json;

use crate::output::to_json;

#[derive(Debug, Parser)]
#[command(name = "resform", version, about = "Resistance forms on finite networks and their limits")]
pub struct Cli {
    /// Write the primary output to this file instead of stdout
    /// (`reproduce-all`: output directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a network or assemble its form matrix.
    Net {
        #[command(subcommand)]
        action: NetAction,
    },
    /// Trace (Schur complement) of a network's form onto a vertex subset.
    Trace {
        #[arg(long)]
        net: PathBuf,
        /// Comma-separated vertex indices.
        #[arg(long, value_delimiter = ',', required = true)]
        subset: Vec<usize>,
    },
    /// Effective resistance, for one pair `x,y` or `all`.
    Resistance {
        #[arg(long)]
        net: PathBuf,
        #[arg(long, default_value = "all")]
        pairs: String,
    },
    /// Jump kernel and killing measure of a form.
    Decompose(FormInput),
    /// Build, check and profile compatible sequences.
    Seq {
        #[command(subcommand)]
        action: SeqAction,
    },
    /// Embeddings into the spectrum of a function algebra.
    Gelfand {
        #[command(subcommand)]
        action: GelfandAction,
    },
    /// Energy measure of a function.
    Gamma {
        #[arg(long)]
        net: PathBuf,
        /// Function values, one per vertex (CSV).
        #[arg(long)]
        f: PathBuf,
    },
    /// Worked examples.
    Demo {
        #[command(subcommand)]
        action: DemoAction,
    },
    /// Monte Carlo checks against the associated jump process.
    Sim {
        #[command(subcommand)]
        action: SimAction,
    },
    /// Run every reproduction experiment and write a pass/fail report.
    ReproduceAll {
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = GASKET_FACTOR)]
        gasket_factor: f64,
        #[arg(long, default_value_t = reproduce::Config::default().seed)]
        seed: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum NetAction {
    Validate {
        #[arg(long)]
        net: PathBuf,
    },
    Assemble {
        #[arg(long)]
        net: PathBuf,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct FormInput {
    /// Network JSON.
    #[arg(long)]
    net: Option<PathBuf>,
    /// Form matrix CSV.
    #[arg(long)]
    form: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Family {
    Dyadic,
    Gasket,
}

#[derive(Debug, Subcommand)]
pub enum SeqAction {
    Build {
        #[arg(value_enum)]
        family: Family,
        #[arg(long)]
        levels: usize,
        /// Gasket renormalization factor.
        #[arg(long)]
        factor: Option<f64>,
        /// Calibrate the gasket factor numerically instead.
        #[arg(long, conflicts_with = "factor")]
        calibrate: bool,
    },
    Check {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long, default_value_t = DEFAULT_COMPAT_TOL)]
        tol: f64,
    },
    Profile {
        #[arg(long)]
        seq: PathBuf,
        /// Values on the top level (CSV).
        #[arg(long)]
        f: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum GelfandAction {
    Embed {
        #[arg(long)]
        spec: PathBuf,
        /// Merge images closer than this (off by default).
        #[arg(long)]
        tol: Option<f64>,
    },
    Pushforward {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
    },
    Isometry {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        f: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
    },
    Closure {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        epsilon: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum DemoAction {
    Counterexample {
        #[arg(long, default_value_t = 12)]
        levels: usize,
        #[arg(long, default_value_t = 4)]
        min_level: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1")]
        set: Vec<f64>,
        /// Also write `counterexample.csv` and `counterexample.svg` here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SimCommon {
    #[arg(long)]
    net: PathBuf,
    /// Reference measure (defaults to counting measure).
    #[arg(long)]
    mu: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of trajectories.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
}

#[derive(Debug, Subcommand)]
pub enum SimAction {
    /// Probability of hitting `a` before `b` from `x0`.
    Hit {
        #[command(flatten)]
        common: SimCommon,
        #[arg(long)]
        a: usize,
        #[arg(long)]
        b: usize,
        #[arg(long)]
        x0: usize,
    },
    /// Commute time between `x` and `y`, compared with `R(x,y) μ(V)`.
    Commute {
        #[command(flatten)]
        common: SimCommon,
        #[arg(long)]
        x: usize,
        #[arg(long)]
        y: usize,
    },
    /// Long-run occupation fractions against `μ / μ(V)`.
    Occupy {
        #[command(flatten)]
        common: SimCommon,
        #[arg(long, default_value_t = 100.0)]
        horizon: f64,
    },
}

/// Result of a command: stdout text and whether it counts as success.
/// A command that ran but found a tolerance breach reports `ok = false`.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub stdout: String,
    pub ok: bool,
}

impl Report {
    fn ok(stdout: String) -> Self {
        Report { stdout, ok: true }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn load_net(path: &Path) -> Result<Network> {
    Network::from_json_str(&read(path)?)
}

fn load_f(path: &Path) -> Result<FunctionOnV> {
    FunctionOnV::from_csv(&read(path)?)
}

fn load_spec(path: &Path) -> Result<AlgebraSpec> {
    AlgebraSpec::from_json_str(&read(path)?)
}

fn load_mu(path: &Path) -> Result<AtomicMeasure> {
    AtomicMeasure::from_json_str(&read(path)?)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Executes `cli`. With `--out`, the primary output goes to that file and the
/// returned stdout is empty.
pub fn run(cli: &Cli) -> Result<Report> {
    if let Command::ReproduceAll { quick, gasket_factor, seed } = &cli.command {
        let dir = cli
            .out
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("reproduce-all needs --out <dir>".into()))?;
        let cfg = reproduce::Config { quick: *quick, gasket_factor: *gasket_factor, seed: *seed };
        let outcomes = reproduce::reproduce_all(dir, &cfg)?;
        let stdout: String = outcomes.iter().map(|o| o.line() + "\n").collect();
        return Ok(Report { stdout, ok: outcomes.iter().all(|o| o.passed) });
    }
    let report = execute(&cli.command)?;
    match &cli.out {
        Some(path) => {
            write_file(path, &report.stdout)?;
            Ok(Report { stdout: String::new(), ok: report.ok })
        }
        None => Ok(report),
    }
}

fn execute(command: &Command) -> Result<Report> {
    match command {
        Command::Net { action } => net(action),
        Command::Trace { net, subset } => {
            let a = assemble(&load_net(net)?);
            Ok(Report::ok(trace(&a, subset)?.traced_form().to_csv()))
        }
        Command::Resistance { net, pairs } => resistance(&assemble(&load_net(net)?), pairs),
        Command::Decompose(input) => {
            let a = match (&input.net, &input.form) {
                (Some(n), _) => assemble(&load_net(n)?),
                (None, Some(f)) => FormMatrix::from_csv(&read(f)?)?,
                (None, None) => unreachable!("clap enforces one input"),
            };
            Ok(Report::ok(to_json(&decompose(&a)?.to_json_value())))
        }
        Command::Seq { action } => seq(action),
        Command::Gelfand { action } => gelfand(action),
        Command::Gamma { net, f } => {
            let a = assemble(&load_net(net)?);
            let g = energy_measure(&a, &load_f(f)?)?;
            Ok(Report::ok(to_json(&json!({"masses": g.masses(), "total": g.total()}))))
        }
        Command::Demo { action: DemoAction::Counterexample { levels, min_level, set, out_dir } } => {
            let rows = counterexample_demo(*min_level, *levels, set)?;
            let csv = counterexample_csv(&rows);
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(dir)?;
                write_file(&dir.join("counterexample.csv"), &csv)?;
                write_file(&dir.join("counterexample.svg"), &counterexample_svg(&rows))?;
            }
            Ok(Report::ok(csv))
        }
        Command::Sim { action } => sim(action),
        Command::ReproduceAll { .. } => unreachable!("handled in run"),
    }
}

fn net(action: &NetAction) -> Result<Report> {
    match action {
        NetAction::Validate { net } => {
            let network = load_net(net)?;
            let a = assemble(&network);
            let markov = is_markov(&a, DEFAULT_TOL);
            Ok(Report::ok(to_json(&json!({
                "vertices": network.len(),
                "edges": network.edges().len(),
                "components": network.components().len(),
                "markov": markov.markov,
            }))))
        }
        NetAction::Assemble { net } => Ok(Report::ok(assemble(&load_net(net)?).to_csv())),
    }
}

fn parse_pair(text: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidArgument(format!("expected `all` or `x,y`, got `{text}`"));
    let (x, y) = text.split_once(',').ok_or_else(bad)?;
    Ok((x.trim().parse().map_err(|_| bad())?, y.trim().parse().map_err(|_| bad())?))
}

fn resistance(a: &FormMatrix, pairs: &str) -> Result<Report> {
    if pairs == "all" {
        return Ok(Report::ok(resistance_matrix(a)?.to_csv()));
    }
    let (x, y) = parse_pair(pairs)?;
    let r = effective_resistance(a, x, y)?;
    Ok(Report::ok(to_json(&json!({"x": x, "y": y, "resistance": r}))))
}

fn seq(action: &SeqAction) -> Result<Report> {
    match action {
        SeqAction::Build { family, levels, factor, calibrate } => {
            let s = match family {
                Family::Dyadic => {
                    if factor.is_some() || *calibrate {
                        return Err(Error::InvalidArgument("--factor/--calibrate apply to gasket only".into()));
                    }
                    build_dyadic_interval(*levels)?
                }
                Family::Gasket => {
                    let f = if *calibrate { calibrate_gasket_factor()? } else { factor.unwrap_or(GASKET_FACTOR) };
                    build_sierpinski_gasket_with_factor(*levels, f)?
                }
            };
            Ok(Report::ok(to_json(&s.to_json_value())))
        }
        SeqAction::Check { seq, tol } => {
            let s = CompatibleSequence::from_json_str(&read(seq)?)?;
            let r = check_compatibility(&s, *tol)?;
            Ok(Report {
                stdout: to_json(&json!({
                    "accepted": r.accepted(),
                    "tol": r.tol,
                    "max_relative_deviation": r.max_relative_deviation(),
                    "deviations": r.deviations,
                    "scales": r.scales,
                })),
                ok: r.accepted(),
            })
        }
        SeqAction::Profile { seq, f } => {
            let s = CompatibleSequence::from_json_str(&read(seq)?)?;
            let p = energy_profile(&s, &load_f(f)?)?;
            Ok(Report::ok(to_json(&json!({
                "energies": p.energies,
                "nondecreasing": p.is_nondecreasing(0.0),
                "warning": p.warning,
            }))))
        }
    }
}

fn gelfand(action: &GelfandAction) -> Result<Report> {
    match action {
        GelfandAction::Embed { spec, tol } => {
            let spec = load_spec(spec)?;
            let e = embed(&spec, *tol);
            let (nowhere, zeros) = vanishes_nowhere(&spec);
            Ok(Report::ok(to_json(&json!({
                "images": e.images(),
                "classes": e.classes(),
                "separated": e.separated(),
                "vanishes_nowhere": nowhere,
                "common_zeros": zeros,
            }))))
        }
        GelfandAction::Pushforward { spec, mu, tol } => {
            let e = embed(&load_spec(spec)?, *tol);
            let p = pushforward(&load_mu(mu)?, &e)?;
            Ok(Report::ok(to_json(&json!({"classes": e.classes(), "atoms": p.atoms(), "total": p.total()}))))
        }
        GelfandAction::Isometry { spec, mu, f, tol } => {
            let e = embed(&load_spec(spec)?, *tol);
            let c = l2_isometry_check(&load_f(f)?, &load_mu(mu)?, &e)?;
            Ok(Report::ok(to_json(&c)))
        }
        GelfandAction::Closure { spec, epsilon } => {
            Ok(Report::ok(to_json(&spectrum_closure_estimate(&load_spec(spec)?, *epsilon)?)))
        }
    }
}

fn generator(common: &SimCommon) -> Result<(FormMatrix, AtomicMeasure, GeneratorSpec)> {
    let a = assemble(&load_net(&common.net)?);
    let mu = match &common.mu {
        Some(p) => load_mu(p)?,
        None => AtomicMeasure::counting(a.dim()),
    };
    let gen = build_generator(&a, &mu)?;
    Ok((a, mu, gen))
}

fn sim(action: &SimAction) -> Result<Report> {
    match action {
        SimAction::Hit { common, a, b, x0 } => {
            let (_, _, gen) = generator(common)?;
            let est = hitting_probability(&gen, *a, *b, *x0, common.n, common.seed)?;
            Ok(Report::ok(to_json(&json!({"mean": est.mean, "se": est.se, "n": common.n}))))
        }
        SimAction::Commute { common, x, y } => {
            let (a, mu, gen) = generator(common)?;
            require_markov(&a)?;
            let est = commute_time(&gen, *x, *y, common.n, common.seed)?;
            let predicted = effective_resistance(&a, *x, *y)? * mu.total();
            Ok(Report::ok(to_json(&json!({
                "mean": est.mean,
                "se": est.se,
                "n": common.n,
                "predicted": predicted,
            }))))
        }
        SimAction::Occupy { common, horizon } => {
            let (_, _, gen) = generator(common)?;
            Ok(Report::ok(to_json(&occupation_check(&gen, *horizon, common.n, common.seed)?)))
        }
    }
}
