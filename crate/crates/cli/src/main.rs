//! `pbb-spp`: generate instances, solve them sequentially or on a modelled
//! cluster, run benchmark sweeps and re-render reports.
//!
//! Exit codes: 0 optimal, 1 error, 2 usage, 3 infeasible, 4 resource limit
//! (nodes, events or time), 5 no solution within the cutoff.

mod run;
mod units;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spp_balance::TransportKind;
use spp_core::Traversal;

pub const EXIT_ERROR: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_RESOURCE: u8 = 4;
pub const EXIT_NO_SOLUTION: u8 = 5;

#[derive(Parser)]
#[command(
    name = "pbb-spp",
    version,
    about = "Parallel branch-and-bound for the set partitioning problem"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random instance and write it as <name>.spp
    Generate(GenerateArgs),
    /// Solve one instance, sequentially or on a cluster topology
    Solve(SolveArgs),
    /// Repeat runs over a sweep of list limits and balancing modes
    Bench(BenchArgs),
    /// Re-render JSON run reports
    Report(ReportArgs),
}

fn probability(s: &str) -> Result<f64, String> {
    let p: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(format!("p must lie in [0, 1], got {p}"))
    }
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub items: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub vars: u64,
    /// Probability that a variable covers a given item
    #[arg(long, value_parser = probability)]
    pub p: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub cost_min: u64,
    #[arg(long, default_value_t = 100)]
    pub cost_max: u64,
    /// Do not add singleton columns for items no variable covers
    #[arg(long)]
    pub no_coverage: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct RunArgs {
    /// Instance file (.spp)
    pub instance: PathBuf,
    /// Cluster description (TOML); without it the solver runs sequentially
    #[arg(long)]
    pub topology: Option<PathBuf>,
    #[arg(long, default_value = "breadth")]
    pub traversal: Traversal,
    /// Per-worker list limit such as 64KB or 6MB; defaults to the cache share
    #[arg(long, value_parser = units::parse_size)]
    pub list_limit: Option<usize>,
    /// Waiting workers a manager needs before asking other machines
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub nt: u64,
    /// Scheduler seed (deterministic scheduler only)
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep only the initial distribution: idle workers stay idle
    #[arg(long)]
    pub no_balance: bool,
    /// Run on the seeded discrete-event scheduler instead of threads
    #[arg(long)]
    pub deterministic_scheduler: bool,
    #[arg(long, default_value = "memory")]
    pub transport: TransportKind,
    /// Only look for solutions strictly cheaper than this
    #[arg(long)]
    pub cutoff: Option<u64>,
    #[arg(long)]
    pub node_limit: Option<u64>,
    /// Wall-clock limit in seconds (threaded runs)
    #[arg(long)]
    pub timeout: Option<f64>,
}

#[derive(Args)]
pub struct OutputArgs {
    #[arg(long, conflicts_with = "csv")]
    pub json: bool,
    /// CSV output (the default)
    #[arg(long)]
    pub csv: bool,
    /// Per-thread rows instead of the summary (CSV)
    #[arg(long)]
    pub threads: bool,
    /// Write the report here instead of stdout
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchMode {
    With,
    Without,
    Both,
}

#[derive(Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub repetitions: u64,
    /// Balancing modes to run at every sweep point
    #[arg(long, value_enum, default_value = "with")]
    pub mode: BenchMode,
    /// Comma-separated list limits or presets (sweep9 = 1,3,6,9MB; sweep8 = 1,3,6,8MB)
    #[arg(long, value_delimiter = ',')]
    pub list_limits: Vec<String>,
    /// Time a single-core run per point for speedup and efficiency
    #[arg(long)]
    pub seq_baseline: bool,
}

#[derive(Args)]
pub struct ReportArgs {
    /// JSON reports written by `solve --json`
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[command(flatten)]
    pub out: OutputArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => run::generate(&a),
        Command::Solve(a) => run::solve(&a),
        Command::Bench(a) => run::bench(&a),
        Command::Report(a) => run::report(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
