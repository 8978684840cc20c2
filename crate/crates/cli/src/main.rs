use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::error;
use qsd_cli::{parse_config, run, RunError};

/// Run one quantum state diffusion experiment described by a TOML config file.
#[derive(Parser, Debug)]
#[command(name = "qsd", version)]
struct Args {
    /// Path to the run config.
    config: PathBuf,
    /// Replace `master_seed` from the config (for variance studies).
    #[arg(long)]
    seed_override: Option<u64>,
    /// Worker threads; defaults to all cores. Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let result = parse_config(&args.config).map_err(RunError::from).and_then(|mut config| {
        if let Some(seed) = args.seed_override {
            config.master_seed = seed;
        }
        run(&config, args.workers)
    });
    match result {
        Ok(summary) => {
            println!("{}", summary.output_dir.display());
            for name in &summary.artifacts {
                println!("  {name}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
