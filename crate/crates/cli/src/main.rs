//! `fb`: command-line driver for the free boundary laboratory.

mod args;
mod commands;
mod manifest;
mod output;

use std::process::ExitCode;

use clap::Parser;
use fb_core::FbError;

use args::{Cli, Command};

/// Exit status for verification failures (a margin that is not positive).
const EXIT_VERIFY: u8 = 1;
/// Exit status for bad arguments, configs or input files.
const EXIT_USAGE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet { log::LevelFilter::Error } else { log::LevelFilter::Warn })
        .parse_env("FB_LOG")
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("fb: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => match std::env::var("FB_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| args::UsageError(format!("FB_THREADS={v:?} is not a thread count")))?),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(args::UsageError("thread count must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let ctx = commands::Context { quiet: cli.quiet, manifest: cli.manifest.clone(), argv: std::env::args().collect() };
    let verified = match &cli.command {
        Command::Exact(a) => commands::exact(&ctx, a)?,
        Command::Solve(a) => commands::solve(&ctx, a)?,
        Command::Diagnose(a) => commands::diagnose(&ctx, a)?,
        Command::Barriers(a) => commands::barriers(&ctx, a)?,
        Command::Linearized(a) => commands::linearized(&ctx, a)?,
        Command::Sweep(a) => commands::sweep(&ctx, a)?,
    };
    Ok(if verified { ExitCode::SUCCESS } else { ExitCode::from(EXIT_VERIFY) })
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<args::UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match e.downcast_ref::<FbError>() {
        Some(FbError::Parse { .. } | FbError::Config(_)) => EXIT_USAGE,
        _ => EXIT_VERIFY,
    }
}
