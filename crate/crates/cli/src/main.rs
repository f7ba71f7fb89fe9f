//! `gradvi <command> --config <path> --out <dir>`
//!
//! Exit status: 0 when every acceptance bound holds, 1 when one fails,
//! 2 on a configuration error, 3 when a solver or the output fails.
//! `manifest.json` is written whenever the output directory is usable.

mod commands;
mod config;
mod error;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use crate::commands::Command;
use crate::config::Config;
use crate::error::CliError;
use crate::output::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "gradvi", version, about = "Gradient-constrained transport studies")]
struct Args {
    #[arg(value_enum)]
    command: Command,

    /// Flat TOML configuration; every key has a default.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

fn prepare(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Output {
        path: out.display().to_string(),
        reason: e.to_string(),
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    let start = Instant::now();
    let mut manifest = RunManifest::new(args.command.name());

    if let Err(e) = prepare(&args.out) {
        return fail(e);
    }
    let result = Config::load(args.config.as_deref()).and_then(|cfg| commands::run(args.command, &cfg, &args.out, &mut manifest));
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    if let Err(e) = &result {
        manifest.error = Some(e.to_string());
    }
    let written = manifest.write(&args.out);

    for check in &manifest.acceptance {
        println!(
            "{} {}: measured {} bound {}",
            if check.pass { "PASS" } else { "FAIL" },
            check.name,
            check.measured,
            check.bound
        );
    }
    if let Err(e) = result {
        return fail(e);
    }
    if let Err(e) = written {
        return fail(e);
    }
    if manifest.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn fail(err: CliError) -> ExitCode {
    eprintln!("gradvi: {err}");
    ExitCode::from(err.exit_code())
}
