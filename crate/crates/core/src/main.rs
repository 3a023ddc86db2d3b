use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use relaxbv::cli::{self, Overrides, EXIT_SOLVER, EXIT_VALIDATION};
use relaxbv::config::RunConfig;
use relaxbv::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CommandArg {
    Envelope,
    Surface,
    Relax,
    Verify,
    Hypotheses,
}

/// Relaxed energies, envelopes and jump cell problems from a TOML run file.
#[derive(Debug, Parser)]
#[command(name = "relaxbv", version)]
struct Args {
    command: CommandArg,
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "RELAXBV_JOBS")]
    jobs: Option<usize>,
    /// Cell grid resolution (overrides `solver.grid_n`).
    #[arg(long)]
    grid: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut cfg = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("relaxbv: {}: {e}", args.config.display());
            return ExitCode::from(EXIT_VALIDATION as u8);
        }
    };
    let wanted = format!("{:?}", args.command).to_ascii_lowercase();
    if cfg.command.as_str() != wanted {
        eprintln!("relaxbv: command: the file declares `{}` but `{wanted}` was requested", cfg.command.as_str());
        return ExitCode::from(EXIT_VALIDATION as u8);
    }
    Overrides { out: args.out, seed: args.seed, jobs: args.jobs, grid: args.grid }.apply(&mut cfg);
    match cli::run(&cfg) {
        Ok(summary) => {
            eprintln!(
                "relaxbv: {} job(s), {} failed, results in {}",
                summary.jobs,
                summary.failed,
                summary.output.display()
            );
            ExitCode::from(summary.exit_code as u8)
        }
        Err(e) => {
            eprintln!("relaxbv: {e}");
            let code = match e {
                Error::Io(_) => EXIT_SOLVER,
                _ => EXIT_VALIDATION,
            };
            ExitCode::from(code as u8)
        }
    }
}
