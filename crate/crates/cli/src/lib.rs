//! The `embedrel` command-line tool.

pub mod args;
pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fs;

use anyhow::Context;
use clap::Parser;
use serde_json::json;

use crate::args::Cli;
use crate::commands::{dispatch, RunContext};
use crate::config::RunConfig;

/// Bad usage or configuration.
pub const EXIT_USAGE: i32 = 2;
/// The command itself failed.
pub const EXIT_FAILURE: i32 = 1;

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    init_logging(cli.quiet);
    let config = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_USAGE;
        }
    };
    match execute(&cli, &config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet {
        tracing::Level::WARN
    } else {
        tracing::Level::INFO
    };
    let _ = tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .with_target(false)
        .try_init();
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    cli.command.apply(&mut config);
    config.out_dir = Some(config.resolve_out_dir(cli.out.as_deref()));
    config.validate()?;
    Ok(config)
}

fn execute(cli: &Cli, config: &RunConfig) -> anyhow::Result<()> {
    let out = config.out_dir.clone().expect("resolved above");
    let dir = out.join(cli.command.name());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let resolved = json!({ "command": cli.command.name(), "config": config });
    let mut bytes = serde_json::to_vec_pretty(&resolved)?;
    bytes.push(b'\n');
    fs::write(dir.join("resolved_config.json"), bytes)?;
    let ctx = RunContext {
        config,
        out: &out,
        dir,
    };
    dispatch(&cli.command, &ctx)
}
