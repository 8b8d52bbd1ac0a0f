use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mfsbp_cli::commands::run;
use mfsbp_cli::{Command, Overrides, RunConfig};

/// Build, validate and run function-space SBP operators.
#[derive(Parser, Debug)]
#[command(name = "mfsbp", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration; defaults are used for missing keys.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = cli
        .config
        .as_deref()
        .map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
        .and_then(|mut cfg| {
            cfg.apply(&cli.overrides);
            run(cli.command, &cfg)
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
