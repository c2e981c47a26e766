//! `autopeer`: runs simulations and analytics and writes CSV artifacts.
//!
//! Exit codes: 0 success, 1 runtime or IO failure (and failed verification),
//! 2 usage error.

mod args;
mod commands;
mod manifest;

use std::fmt;
use std::fs;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};
use manifest::Manifest;

/// Invalid flags or parameter combinations; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn parse<I: IntoIterator<Item = String>>(argv: I) -> Result<(Cli, clap::ArgMatches), clap::Error> {
    let matches = Cli::command().try_get_matches_from(argv)?;
    let cli = Cli::from_arg_matches(&matches)?;
    Ok((cli, matches))
}

fn dispatch(cli: Cli, matches: &clap::ArgMatches) -> Result<i32> {
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    let command = Cli::command();
    let definition = command.find_subcommand(name).expect("parsed subcommands exist");
    let manifest = Manifest::from_matches(definition, sub);
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a, manifest),
        Command::Scores(a) => commands::scores(&a, manifest),
        Command::Eclipse(a) => commands::eclipse(&a, manifest),
        Command::Attack(a) => commands::attack(&a, manifest),
        Command::Analytics(a) => commands::analytics(&a, manifest),
        Command::Verify(a) => commands::verify(&a, manifest),
        Command::Replay(a) => {
            let text = fs::read_to_string(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
            let recorded = Manifest::parse(&text).map_err(|e| UsageError(format!("{e:#}")))?;
            if recorded.subcommand == "replay" {
                return Err(UsageError("a manifest cannot replay a replay".into()).into());
            }
            let (cli, matches) = parse(recorded.argv(&a.out)).map_err(|e| UsageError(format!("manifest: {e}")))?;
            dispatch(cli, &matches)
        }
    }
}

fn main() -> ExitCode {
    let (cli, matches) = match parse(std::env::args()) {
        Ok(parsed) => parsed,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match dispatch(cli, &matches) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                eprintln!("run `autopeer --help` for usage");
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
