use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use detequiv::{execute, Overrides};

/// Deterministic equivalents for information-plus-noise matrices.
#[derive(Parser)]
#[command(name = "detequiv", version)]
struct Args {
    /// Run config (flat `key = value` file).
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = Overrides {
        seed: args.seed,
        trials: args.trials,
        tol: args.tol,
        out: args.out,
    };
    match execute(&args.config, &overrides) {
        Ok(outcome) => {
            print!("{outcome}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("detequiv: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
