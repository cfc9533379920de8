// Copyright 2026 The errfilt Authors
// SPDX-License-Identifier: Apache-2.0

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use errfilt_cli::config::{self, Entry, RawConfig};
use errfilt_cli::execute::execute;
use errfilt_cli::output::write_table;
use errfilt_cli::{CliError, CliResult, RunConfig};

/// Error filtration and entanglement purification simulator.
#[derive(Debug, Parser)]
#[command(name = "errfilt", version)]
struct Args {
    /// Config file with `key = value` lines and optional [sweep] section.
    config: Option<PathBuf>,
    /// filter, series, purify, protocol1, protocol2, classical, coherent,
    /// compare-codecs, thresholds, sweep or reproduce.
    #[arg(long)]
    command: Option<String>,
    /// Override or add a parameter, e.g. `--set T=4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Add a sweep axis, e.g. `--sweep alpha2=0.5:1:6`.
    #[arg(long = "sweep", value_name = "KEY=VALUES")]
    sweep: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo trials; 0 skips sampling.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Write results here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Print the canonical config and exit.
    #[arg(long)]
    print_config: bool,
}

fn flag(key: &str, value: impl ToString) -> Entry {
    Entry {
        key: key.to_string(),
        value: value.to_string(),
        line: None,
    }
}

fn load(args: &Args) -> CliResult<RunConfig> {
    let mut raw = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
            config::parse_text(&text)?
        }
        None => RawConfig::default(),
    };
    if let Some(c) = &args.command {
        raw.command.push(flag("command", c));
    }
    for s in &args.set {
        raw.command.push(config::parse_override(s)?);
    }
    for s in &args.sweep {
        raw.sweep.push(config::parse_override(s)?);
    }
    if let Some(v) = args.seed {
        raw.command.push(flag("seed", v));
    }
    if let Some(v) = args.trials {
        raw.command.push(flag("trials", v));
    }
    if let Some(v) = args.workers {
        raw.command.push(flag("workers", v));
    }
    if let Some(v) = &args.output {
        raw.command.push(flag("output", v.display()));
    }
    if let Some(v) = &args.format {
        raw.command.push(flag("format", v));
    }
    config::build(&raw)
}

fn run(args: &Args) -> CliResult<()> {
    let cfg = load(args)?;
    if args.print_config {
        print!("{}", cfg.serialize());
        return Ok(());
    }
    let (table, failure) = execute(&cfg)?;
    match &cfg.output {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_table(&cfg, &table, &mut w)?;
            w.flush()?;
        }
        None => {
            let mut w = io::stdout().lock();
            write_table(&cfg, &table, &mut w)?;
            w.flush()?;
        }
    }
    failure.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("errfilt: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
