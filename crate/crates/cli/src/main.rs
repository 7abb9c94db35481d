//! `hierattr`: run attribution scenarios and the standalone analyses.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hierattr_core::Error;

use crate::output::Failure;

#[derive(Debug, Parser)]
#[command(name = "hierattr", version, about = "Hierarchical attribution laboratory")]
struct Cli {
    /// Output directory. Defaults to `$HIERATTR_OUT/<run>` or `results/<run>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for seed-parallel work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: commands::Command,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return Failure::config(Error::InvalidConfig(e.kind().to_string())).report();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();

    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            return Failure::config(Error::InvalidConfig(format!("--jobs: {e}"))).report();
        }
    }
    match commands::dispatch(cli.command, cli.out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
