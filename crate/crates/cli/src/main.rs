//! `laar` — workload generation, capability fitting, cluster simulation,
//! policy comparison, and the endpoint-picker service, behind one binary.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "laar",
    version,
    about = "Accuracy-aware routing simulator and endpoint picker",
    after_help = "Exit codes: 0 success, 1 usage/validation, 2 I/O, 3 simulation/config inconsistency."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key-value lookup workload file.
    Gen(GenArgs),
    /// Fit per-model capability coefficients from a training split or an attempt log.
    Fit(FitArgs),
    /// Run one policy over a workload and write the attempt log and report.
    Simulate(SimulateArgs),
    /// Run several policies over the same workload and report improvement ratios.
    Compare(CompareArgs),
    /// Serve the endpoint-picker HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of base queries; each expands to one record per (language, length).
    #[arg(long)]
    n: usize,
    /// Comma-separated languages: en, ja, zh.
    #[arg(long, value_delimiter = ',', default_value = "en,ja,zh")]
    languages: Vec<String>,
    /// Comma-separated target token counts (4096, 8192, 16384, 32768, 65536).
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "4096,8192,16384,32768,65536"
    )]
    lengths: Vec<u64>,
    /// Generation seed. Mandatory: runs must be reproducible.
    #[arg(long)]
    seed: u64,
    /// Output workload file.
    #[arg(long)]
    out: PathBuf,
    /// Also write disjoint <out>.train/.eval splits by base-query parity.
    #[arg(long)]
    split: bool,
}

#[derive(Args)]
struct FitArgs {
    /// Training workload file (requires --profile and --seed).
    #[arg(long, conflicts_with = "attempt_log")]
    workload: Option<PathBuf>,
    /// Accuracy profile path, or `default` for the built-in scenario.
    #[arg(long)]
    profile: Option<String>,
    /// Response-draw seed for labeling the training split.
    #[arg(long)]
    seed: Option<u64>,
    /// Attempt log to fit from instead of a workload.
    #[arg(long)]
    attempt_log: Option<PathBuf>,
    /// Directory receiving one coefficient file per model.
    #[arg(long)]
    out_dir: PathBuf,
    /// Gradient-descent step size.
    #[arg(long, default_value_t = 0.5)]
    learning_rate: f64,
    /// Gradient-descent epochs.
    #[arg(long, default_value_t = 5000)]
    epochs: usize,
    /// L2 penalty (bias excluded).
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Workload file to run.
    #[arg(long)]
    workload: PathBuf,
    /// Accuracy profile path, or `default` for the built-in scenario.
    #[arg(long, default_value = "default")]
    profile: String,
    /// Cluster config; falls back to $LAAR_CONFIG, then ./laar.conf.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Policy override: laar, load-aware, session-affinity, round-robin.
    #[arg(long)]
    policy: Option<String>,
    /// Seed override for the response draws.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving the attempt log and report.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Workload file to run.
    #[arg(long)]
    workload: PathBuf,
    /// Accuracy profile path, or `default` for the built-in scenario.
    #[arg(long, default_value = "default")]
    profile: String,
    /// Cluster config; falls back to $LAAR_CONFIG, then ./laar.conf.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Policies to compare; must include laar and at least one baseline.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "laar,load-aware,session-affinity"
    )]
    policies: Vec<String>,
    /// Seed override for the response draws.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving per-policy logs, reports, and the comparison table.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// Cluster config; falls back to $LAAR_CONFIG, then ./laar.conf.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Listen address; falls back to $LAAR_LISTEN, then 127.0.0.1:8080.
    #[arg(long)]
    listen: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Gen(args) => commands::gen(args),
        Command::Fit(args) => commands::fit(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Compare(args) => commands::compare(args),
        Command::Serve(args) => commands::serve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
