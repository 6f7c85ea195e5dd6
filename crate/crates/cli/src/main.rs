use std::fmt;
use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod manifest;
mod output;

use args::{Cli, Command, SEED_ENV};

/// Bad flags, missing arguments or an unreadable config: exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn run(cli: Cli) -> anyhow::Result<()> {
    let job = match &cli.command {
        Command::Rerun { manifest, output } => commands::rerun(manifest, output.as_deref())?,
        cmd => {
            let config = cmd.resolve_config(std::env::var(SEED_ENV).ok())?;
            let job = commands::execute(cmd.name(), config)?;
            commands::write_manifests(&job)?;
            job
        }
    };
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(job.stdout.as_bytes())?;
    if job.stdout.is_empty() {
        stdout.write_all(job.notes.as_bytes())?;
    } else {
        eprint!("{}", job.notes);
    }
    stdout.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spantag: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
