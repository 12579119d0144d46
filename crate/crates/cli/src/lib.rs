//! Command-line front end: solve one instance, benchmark a directory of
//! instances, or generate synthetic instances.

pub mod bench;
pub mod gen;
pub mod solve;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mcpr_core::cuts::SecVariant;
use mcpr_core::ils::IlsConfig;
use mcpr_core::instance::{parse_instance, Instance};
use mcpr_core::solver::SolveConfig;

/// File extension of instance files.
pub const INSTANCE_EXT: &str = "mcpr";

#[derive(Debug, Parser)]
#[command(name = "mcpr", version, about = "Maximum capture with a routing budget")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one instance with one method.
    Solve(SolveArgs),
    /// Run a method matrix over a directory of instances.
    Bench(BenchArgs),
    /// Generate synthetic instances.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Method {
    Ncp,
    Nbc,
    CpMtz,
    Ils,
    Brute,
    MilpExport,
    ConicExport,
    MtzExport,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ncp => "ncp",
            Method::Nbc => "nbc",
            Method::CpMtz => "cp-mtz",
            Method::Ils => "ils",
            Method::Brute => "brute",
            Method::MilpExport => "milp-export",
            Method::ConicExport => "conic-export",
            Method::MtzExport => "mtz-export",
        }
    }

    pub fn is_export(self) -> bool {
        matches!(self, Method::MilpExport | Method::ConicExport | Method::MtzExport)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SecArg {
    Sec1,
    Sec2,
    Both,
}

impl From<SecArg> for SecVariant {
    fn from(s: SecArg) -> Self {
        match s {
            SecArg::Sec1 => SecVariant::Sec1,
            SecArg::Sec2 => SecVariant::Sec2,
            SecArg::Both => SecVariant::Both,
        }
    }
}

/// Settings shared by `solve` and `bench`.
#[derive(Debug, Clone, Args)]
pub struct SolverOpts {
    /// Wall-clock limit per run, in seconds.
    #[arg(long, default_value_t = 3600.0)]
    pub time_limit: f64,
    /// Stopping tolerance of the exact methods.
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    /// Number of zone groups.
    #[arg(long, default_value_t = 20)]
    pub groups: usize,
    #[arg(long, value_enum, default_value_t = SecArg::Both)]
    pub sec: SecArg,
    /// Base seed of the local search.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Local-search runs per instance.
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    /// Local-search iterations per run.
    #[arg(long, default_value_t = 10_000)]
    pub nb_iter: usize,
    /// Print per-iteration progress.
    #[arg(long)]
    pub trace: bool,
}

impl Default for SolverOpts {
    fn default() -> Self {
        SolverOpts {
            time_limit: 3600.0,
            epsilon: 1e-6,
            groups: 20,
            sec: SecArg::Both,
            seed: 1,
            runs: 20,
            nb_iter: 10_000,
            trace: false,
        }
    }
}

impl SolverOpts {
    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            epsilon: self.epsilon,
            groups: self.groups,
            time_limit: Duration::from_secs_f64(self.time_limit),
            sec_variant: self.sec.into(),
            trace: self.trace,
            ..SolveConfig::default()
        }
    }

    pub fn ils_config(&self) -> IlsConfig {
        IlsConfig {
            nb_iter: self.nb_iter,
            time_limit: Duration::from_secs_f64(self.time_limit),
            runs: self.runs,
            seed: self.seed,
            trace: self.trace,
            ..IlsConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub instance: PathBuf,
    /// Directory for exported model files.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[command(flatten)]
    pub opts: SolverOpts,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub dir: PathBuf,
    /// Comma-separated methods.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "ncp,nbc,cp-mtz,ils")]
    pub method: Vec<Method>,
    /// Comma-separated budget multipliers; each instance is run once per multiplier.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Vec<f64>,
    /// Directory for `results.csv` and `results.md`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[command(flatten)]
    pub opts: SolverOpts,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    /// Candidate locations.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub m: u64,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub zones: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Cardinality cap; defaults to m.
    #[arg(long)]
    pub cap: Option<usize>,
    /// Budget as a fraction of a nearest-neighbour tour over all locations.
    #[arg(long, default_value_t = 0.5)]
    pub budget_ratio: f64,
    /// Comma-separated budget multipliers; one file per multiplier.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Vec<f64>,
    /// Base name of the generated instances.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Solve(a) => solve::cmd_solve(&a, out),
        Command::Bench(a) => bench::cmd_bench(&a, out),
        Command::Gen(a) => gen::cmd_gen(&a, out),
    }
}

pub fn read_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_instance(&text).with_context(|| format!("invalid instance {}", path.display()))
}

/// Name of the copy of `base` with its budget scaled by `mult`.
pub fn budget_variant_name(base: &str, mult: f64) -> String {
    format!("{base}_T{mult}")
}

/// Decimal rendering that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
