use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use torus_pdo_cli::{resolve_threads, run_file, RunOptions, EXIT_USAGE};

/// Runs one torus-pdo scenario and writes CSV/JSON artifacts plus a manifest.
#[derive(Debug, Parser)]
#[command(name = "torus-pdo", version)]
struct Args {
    /// Scenario config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory; overrides the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random inputs; overrides the config's `seed` (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            return ExitCode::from(code as u8);
        }
    };
    let env = std::env::var("TORUS_PDO_THREADS").ok();
    let result = resolve_threads(args.threads, env.as_deref()).and_then(|threads| {
        let opts = RunOptions { out: args.out, seed: args.seed, threads };
        run_file(&args.config, &opts)
    });
    match result {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("torus-pdo: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
