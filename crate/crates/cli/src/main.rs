mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Experience and reputation based trust engine.
#[derive(Debug, Parser)]
#[command(name = "der", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print a config file with every default filled in.
    Init {
        /// Write to this path instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overwrite an existing file.
        #[arg(long)]
        force: bool,
    },
    /// Replay a feedback ledger into an experience graph snapshot.
    Replay {
        ledger: PathBuf,
        /// Snapshot destination (JSONL); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replay only events up to this block, decaying idle edges to it.
        #[arg(long)]
        until: Option<u64>,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Global reputation ranking, or trust ranking from one user's view.
    Rank {
        /// Feedback ledger to replay.
        #[arg(long, conflicts_with = "graph", required_unless_present = "graph")]
        ledger: Option<PathBuf>,
        /// Graph snapshot written by `replay`.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Rank counterparts by trust from this user's perspective.
        #[arg(long)]
        trustor: Option<String>,
        /// Comma-separated candidates (default: every other user).
        #[arg(long, value_delimiter = ',', requires = "trustor")]
        candidates: Option<Vec<String>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Experience trace for a feedback score schedule.
    TraceExp {
        /// Scores separated by whitespace, commas or newlines; `#` starts a
        /// comment.
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Run a seeded ecosystem scenario.
    Simulate {
        scenario: PathBuf,
        /// Output directory (default: `paths.output_dir` from the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Solver iterations on seeded random graphs of the given sizes.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "1000,4000,8000,16000")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Expected out-degree of the generated graphs.
        #[arg(long, default_value_t = 10.0)]
        out_degree: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        engine: EngineArgs,
    },
}

/// Config file plus per-run overrides; flags win over the file, the file
/// wins over built-in defaults.
#[derive(Debug, Args, Default)]
pub struct EngineArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Reputation weight in trust; the experience weight becomes `1 - w1`.
    #[arg(long)]
    pub w1: Option<f64>,
    #[arg(long)]
    pub decay_epoch: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
