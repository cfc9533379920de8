// Copyright 2026 The errfilt Authors
// SPDX-License-Identifier: Apache-2.0

use std::io::Write;

use serde_json::{json, Value};

use crate::config::{Format, RunConfig};
use crate::error::CliResult;
use crate::execute::{Cell, Table};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn header_line(cfg: &RunConfig) -> String {
    format!(
        "# errfilt version={VERSION} config_hash={} seed={} trials={} workers={}",
        cfg.hash(),
        cfg.seed,
        cfg.trials,
        cfg.workers
    )
}

fn text(cell: &Cell) -> String {
    match cell {
        Cell::Int(v) => v.to_string(),
        Cell::Float(v) => format!("{v:.16e}"),
        Cell::Text(s) => s.clone(),
        Cell::Bool(b) => b.to_string(),
        Cell::Empty => String::new(),
    }
}

fn value(cell: &Cell) -> Value {
    match cell {
        Cell::Int(v) => json!(v),
        Cell::Float(v) if v.is_finite() => json!(v),
        Cell::Text(s) => json!(s),
        Cell::Bool(b) => json!(b),
        Cell::Float(_) | Cell::Empty => Value::Null,
    }
}

pub fn write_csv<W: Write>(cfg: &RunConfig, table: &Table, mut out: W) -> CliResult<()> {
    writeln!(out, "{}", header_line(cfg))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(text))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(cfg: &RunConfig, table: &Table, mut out: W) -> CliResult<()> {
    let rows: Vec<Value> = table
        .rows
        .iter()
        .map(|r| Value::Array(r.iter().map(value).collect()))
        .collect();
    let doc = json!({
        "header": {
            "version": VERSION,
            "config_hash": cfg.hash(),
            "command": cfg.command.as_str(),
            "seed": cfg.seed,
            "trials": cfg.trials,
            "workers": cfg.workers,
        },
        "columns": table.columns,
        "rows": rows,
    });
    serde_json::to_writer_pretty(&mut out, &doc)?;
    writeln!(out)?;
    Ok(())
}

pub fn write_table<W: Write>(cfg: &RunConfig, table: &Table, out: W) -> CliResult<()> {
    match cfg.format {
        Format::Csv => write_csv(cfg, table, out),
        Format::Json => write_json(cfg, table, out),
    }
}
