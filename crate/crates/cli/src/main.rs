//! fffopt: roughness-constrained print parameter tuning at the command line.

mod report;
mod run;
mod scan;
mod session;
mod trace;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "fffopt",
    version,
    about = "Tune print speed and extrusion against a surface roughness limit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze layer scan CSV files.
    #[command(subcommand)]
    Scan(ScanCommand),
    /// Closed-loop simulation and operator-driven optimization sessions.
    #[command(subcommand)]
    Optimize(OptimizeCommand),
    /// Summarize an optimization trace CSV.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum ScanCommand {
    /// Print per-layer Ra and the part's global roughness.
    Ra(ScanRaArgs),
    /// Spread statistics of global roughness across repeated scans.
    Stats(ScanStatsArgs),
}

#[derive(Args)]
struct ScanRaArgs {
    /// Scan CSV file (layer_index,position_mm,height_um).
    input: PathBuf,
}

#[derive(Args)]
struct ScanStatsArgs {
    /// Two or more scan CSV files of the same layer.
    #[arg(num_args = 2.., required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum OptimizeCommand {
    /// Run the full simulated closed loop and write a trace CSV.
    Run(RunArgs),
    /// Propose the next setting of an operator session.
    Suggest(SuggestArgs),
    /// Record a measured print into an operator session.
    Record(RecordArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// Master seed for the virtual printer's noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cycles in the first phase.
    #[arg(long, default_value_t = 17)]
    iters_phase1: u32,
    /// Confidence threshold of the first phase.
    #[arg(long, default_value_t = 0.4)]
    pi1: f64,
    /// Cycles in the second phase.
    #[arg(long, default_value_t = 14)]
    iters_phase2: u32,
    /// Confidence threshold of the second phase.
    #[arg(long, default_value_t = 0.1)]
    pi2: f64,
    /// Roughness limit in µm.
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    /// Output path for the trace CSV.
    #[arg(long)]
    out: PathBuf,
    /// Virtual printer config JSON; missing fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Initialization CSV (vp,em,roughness_um[,modulus_gpa]) to use instead
    /// of the built-in sweep.
    #[arg(long)]
    init: Option<PathBuf>,
}

#[derive(Args)]
struct SuggestArgs {
    /// Session state JSON file.
    #[arg(long)]
    state: PathBuf,
}

#[derive(Args)]
pub struct RecordArgs {
    /// Session state JSON file.
    #[arg(long)]
    state: PathBuf,
    /// Measured global roughness in µm.
    #[arg(long)]
    roughness: f64,
    /// Print speed in mm/s, overriding the pending suggestion.
    #[arg(long, requires = "em")]
    vp: Option<f64>,
    /// Extrusion multiplier, overriding the pending suggestion.
    #[arg(long, requires = "vp")]
    em: Option<f64>,
    /// Optional modulus reading in GPa.
    #[arg(long)]
    modulus: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Trace CSV produced by `optimize run` or assembled by hand.
    #[arg(long)]
    trace: PathBuf,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Scan(ScanCommand::Ra(a)) => scan::ra(&a.input),
        Command::Scan(ScanCommand::Stats(a)) => scan::stats(&a.inputs),
        Command::Optimize(OptimizeCommand::Run(a)) => run::run(a),
        Command::Optimize(OptimizeCommand::Suggest(a)) => session::suggest(&a.state),
        Command::Optimize(OptimizeCommand::Record(a)) => session::record(a),
        Command::Report(a) => report::report(&a.trace),
    }
}
