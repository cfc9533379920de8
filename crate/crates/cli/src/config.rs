// Copyright 2026 The errfilt Authors
// SPDX-License-Identifier: Apache-2.0

//! Run configuration: a small `key = value` format with `[command]` and
//! `[sweep]` sections, plus command-line overrides.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use errfilt::purification::{DecoderKind, PurifyConfig};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MAX_SWEEP_AXES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Command {
    Filter,
    Series,
    Purify,
    Protocol1,
    Protocol2,
    Classical,
    Coherent,
    CompareCodecs,
    Thresholds,
    Sweep,
    Reproduce,
}

impl Command {
    pub const ALL: [Command; 11] = [
        Self::Filter,
        Self::Series,
        Self::Purify,
        Self::Protocol1,
        Self::Protocol2,
        Self::Classical,
        Self::Coherent,
        Self::CompareCodecs,
        Self::Thresholds,
        Self::Sweep,
        Self::Reproduce,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Filter => "filter",
            Self::Series => "series",
            Self::Purify => "purify",
            Self::Protocol1 => "protocol1",
            Self::Protocol2 => "protocol2",
            Self::Classical => "classical",
            Self::Coherent => "coherent",
            Self::CompareCodecs => "compare-codecs",
            Self::Thresholds => "thresholds",
            Self::Sweep => "sweep",
            Self::Reproduce => "reproduce",
        }
    }

    pub fn params(&self) -> &'static [ParamSpec] {
        match self {
            Self::Filter => FILTER,
            Self::Series => SERIES,
            Self::Purify => PURIFY,
            Self::Protocol1 => PROTOCOL1,
            Self::Protocol2 => PROTOCOL2,
            Self::Classical => CLASSICAL,
            Self::Coherent => COHERENT,
            Self::CompareCodecs => COMPARE,
            Self::Thresholds => THRESHOLDS,
            Self::Reproduce => REPRODUCE,
            Self::Sweep => &[],
        }
    }

    pub fn spec(&self, name: &str) -> Option<&'static ParamSpec> {
        self.params().iter().find(|p| p.name == name)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown command '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(format!("unknown format '{s}' (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    Int { min: usize },
    Float { min: f64, max: f64 },
    Choice(&'static [&'static str]),
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: Option<&'static str>,
    pub kind: Kind,
}

const fn req(name: &'static str, kind: Kind) -> ParamSpec {
    ParamSpec {
        name,
        default: None,
        kind,
    }
}

const fn opt(name: &'static str, default: &'static str, kind: Kind) -> ParamSpec {
    ParamSpec {
        name,
        default: Some(default),
        kind,
    }
}

const POS: Kind = Kind::Int { min: 1 };
const NONNEG: Kind = Kind::Int { min: 0 };
const UNIT: Kind = Kind::Float { min: 0.0, max: 1.0 };
const NONNEG_F: Kind = Kind::Float {
    min: 0.0,
    max: f64::INFINITY,
};
const ANY_F: Kind = Kind::Float {
    min: f64::NEG_INFINITY,
    max: f64::INFINITY,
};

pub const CODECS: &[&str] = &["fourier", "hadamard", "collective", "identity"];
pub const DISTRIBUTIONS: &[&str] = &["point-mass", "wrapped-gaussian"];
pub const DECODERS: &[&str] = &["fourier", "hadamard"];
pub const NOISES: &[&str] = &["linear-phase", "linear-amplitude", "nonlinear-phase", "deterministic"];

const FILTER: &[ParamSpec] = &[
    req("T", POS),
    req("alpha2", UNIT),
    opt("Q", "1", POS),
    opt("S", "1", POS),
    opt("codec", "fourier", Kind::Choice(CODECS)),
    opt("distribution", "point-mass", Kind::Choice(DISTRIBUTIONS)),
    opt("module_alpha2", "1", UNIT),
];
const SERIES: &[ParamSpec] = &[req("T", POS), req("alpha2", UNIT), opt("Q", "2", POS)];
const PURIFY: &[ParamSpec] = &[
    req("n", POS),
    req("m", POS),
    req("p", UNIT),
    opt("decoder", "fourier", Kind::Choice(DECODERS)),
    opt("offset", "0", NONNEG),
];
const PROTOCOL1: &[ParamSpec] = &[req("S", POS), req("R", POS), req("p", UNIT)];
const PROTOCOL2: &[ParamSpec] = &[req("S", POS), req("T", POS), req("alpha2", UNIT)];
const CLASSICAL: &[ParamSpec] = &[
    req("T", POS),
    opt("A", "1", NONNEG_F),
    opt("noise", "linear-phase", Kind::Choice(NOISES)),
    opt("alpha", "0.9", UNIT),
    opt("sigma", "0.1", NONNEG_F),
    opt("phi_std", "0.1", NONNEG_F),
];
const COHERENT: &[ParamSpec] = &[
    req("T", POS),
    req("alpha2", UNIT),
    opt("phi", "0", ANY_F),
    opt("lambda", "1", NONNEG_F),
];
const COMPARE: &[ParamSpec] = &[req("T", POS), req("alpha2", UNIT)];
const THRESHOLDS: &[ParamSpec] = &[req("fidelity", UNIT)];
const REPRODUCE: &[ParamSpec] = &[opt("subset", "all", Kind::Text)];

impl ParamSpec {
    /// Checks `value` and returns its canonical text.
    pub fn check(&self, value: &str) -> Result<String, String> {
        let name = self.name;
        match self.kind {
            Kind::Int { min } => {
                let v: usize = value
                    .parse()
                    .map_err(|_| format!("{name} must be an integer >= {min}, got '{value}'"))?;
                if v < min {
                    return Err(format!("{name} must be >= {min}, got {v}"));
                }
                Ok(v.to_string())
            }
            Kind::Float { min, max } => {
                let v: f64 = value
                    .parse()
                    .map_err(|_| format!("{name} must be a number, got '{value}'"))?;
                if !v.is_finite() || v < min || v > max {
                    return Err(match (min.is_finite(), max.is_finite()) {
                        (true, true) => format!("{name} must lie in [{min}, {max}], got {v}"),
                        (true, false) => format!("{name} must be >= {min}, got {v}"),
                        _ => format!("{name} must be finite, got {v}"),
                    });
                }
                Ok(value.to_string())
            }
            Kind::Choice(options) => {
                if options.contains(&value) {
                    Ok(value.to_string())
                } else {
                    Err(format!("{name} must be one of {}, got '{value}'", options.join(", ")))
                }
            }
            Kind::Text => Ok(value.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepValues {
    List(Vec<String>),
    Grid { start: f64, stop: f64, count: usize },
}

impl SweepValues {
    fn parse(text: &str) -> Result<Self, String> {
        if text.contains(':') {
            let parts: Vec<&str> = text.split(':').map(str::trim).collect();
            let [a, b, c] = parts[..] else {
                return Err(format!("grid must be start:stop:count, got '{text}'"));
            };
            let num = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| format!("bad grid bound '{s}'"))
            };
            let count: usize = c.parse().map_err(|_| format!("bad grid count '{c}'"))?;
            Ok(Self::Grid {
                start: num(a)?,
                stop: num(b)?,
                count,
            })
        } else {
            let items: Vec<String> = text.split(',').map(|s| s.trim().to_string()).collect();
            if items.iter().any(String::is_empty) {
                return Err(format!("empty value in list '{text}'"));
            }
            Ok(Self::List(items))
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::List(v) => v.len(),
            Self::Grid { count, .. } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values as parameter text; grid points on integer parameters must land
    /// on integers.
    pub fn expand(&self, spec: &ParamSpec) -> Result<Vec<String>, String> {
        let raw: Vec<String> = match self {
            Self::List(v) => v.clone(),
            Self::Grid { start, stop, count } => (0..*count)
                .map(|i| {
                    let x = if i + 1 == *count && *count > 1 {
                        *stop
                    } else {
                        start + (stop - start) * i as f64 / (*count - 1).max(1) as f64
                    };
                    match spec.kind {
                        Kind::Int { .. } => {
                            let r = x.round();
                            if (x - r).abs() > 1e-9 {
                                Err(format!("grid point {x} of {} is not an integer", spec.name))
                            } else {
                                Ok(format!("{}", r as i64))
                            }
                        }
                        _ => Ok(format!("{x}")),
                    }
                })
                .collect::<Result<_, _>>()?,
        };
        raw.iter().map(|v| spec.check(v)).collect()
    }
}

impl fmt::Display for SweepValues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::List(v) => f.write_str(&v.join(", ")),
            Self::Grid { start, stop, count } => write!(f, "{start}:{stop}:{count}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub name: String,
    pub values: SweepValues,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    /// Command evaluated at every sweep point.
    pub target: Option<Command>,
    /// Canonical parameter text, defaults filled in.
    pub params: BTreeMap<String, String>,
    pub sweep: Vec<SweepAxis>,
    pub seed: u64,
    pub trials: u64,
    pub workers: usize,
    pub output: Option<PathBuf>,
    pub format: Format,
}

/// One `key = value` assignment and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub command: Vec<Entry>,
    pub sweep: Vec<Entry>,
}

/// Splits config text into section entries. Keys before any section header
/// belong to `[command]`.
pub fn parse_text(text: &str) -> CliResult<RawConfig> {
    let mut raw = RawConfig::default();
    let mut in_sweep = false;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(section) = line.strip_prefix('[') {
            let section = section
                .strip_suffix(']')
                .ok_or_else(|| CliError::at(Some(n), "unterminated section header"))?
                .trim();
            in_sweep = match section {
                "command" => false,
                "sweep" => true,
                other => return Err(CliError::at(Some(n), format!("unknown section [{other}]"))),
            };
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::at(Some(n), format!("expected key = value, got '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(CliError::at(Some(n), "empty key or value"));
        }
        let entry = Entry {
            key: key.to_string(),
            value: value.to_string(),
            line: Some(n),
        };
        if in_sweep {
            raw.sweep.push(entry);
        } else {
            raw.command.push(entry);
        }
    }
    Ok(raw)
}

/// Parses `key=value` overrides given on the command line.
pub fn parse_override(text: &str) -> CliResult<Entry> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("--set expects key=value, got '{text}'")))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() || v.is_empty() {
        return Err(CliError::config(format!("--set expects key=value, got '{text}'")));
    }
    Ok(Entry {
        key: k.to_string(),
        value: v.to_string(),
        line: None,
    })
}

fn parse_field<T: FromStr>(e: &Entry) -> CliResult<T>
where
    T::Err: fmt::Display,
{
    e.value
        .parse()
        .map_err(|err: T::Err| CliError::at(e.line, format!("{}: {err}", e.key)))
}

/// Validates raw entries (later entries override earlier ones) into a
/// [`RunConfig`].
pub fn build(raw: &RawConfig) -> CliResult<RunConfig> {
    let mut command = None;
    let mut target = None;
    let mut seed = 0;
    let mut trials = 0;
    let mut workers = 1;
    let mut output = None;
    let mut format = Format::Csv;
    let mut params: Vec<&Entry> = Vec::new();
    for e in &raw.command {
        match e.key.as_str() {
            "command" => command = Some(parse_field::<Command>(e)?),
            "target" => target = Some((parse_field::<Command>(e)?, e.line)),
            "seed" => seed = parse_field::<u64>(e)?,
            "trials" => trials = parse_field::<u64>(e)?,
            "workers" => {
                workers = parse_field::<usize>(e)?;
                if workers == 0 {
                    return Err(CliError::at(e.line, "workers must be >= 1"));
                }
            }
            "output" => output = Some(PathBuf::from(&e.value)),
            "format" => format = parse_field::<Format>(e)?,
            _ => params.push(e),
        }
    }
    let command = command.ok_or_else(|| CliError::config("missing required key 'command'"))?;
    let eval = match command {
        Command::Sweep => {
            let (t, line) = target.ok_or_else(|| CliError::config("sweep needs a 'target' command"))?;
            if matches!(t, Command::Sweep | Command::Reproduce) {
                return Err(CliError::at(line, format!("cannot sweep '{t}'")));
            }
            target = Some((t, line));
            t
        }
        _ => {
            if let Some((_, line)) = target {
                return Err(CliError::at(line, "'target' is only valid with command = sweep"));
            }
            if let Some(e) = raw.sweep.first() {
                return Err(CliError::at(e.line, "[sweep] entries need command = sweep"));
            }
            command
        }
    };

    let mut values: BTreeMap<String, String> = BTreeMap::new();
    for e in params {
        let spec = eval
            .spec(&e.key)
            .ok_or_else(|| CliError::at(e.line, format!("unknown key '{}' for {eval}", e.key)))?;
        let v = spec.check(&e.value).map_err(|m| CliError::at(e.line, m))?;
        values.insert(e.key.clone(), v);
    }

    let mut sweep: Vec<SweepAxis> = Vec::new();
    for e in &raw.sweep {
        let spec = eval
            .spec(&e.key)
            .ok_or_else(|| CliError::at(e.line, format!("unknown sweep axis '{}' for {eval}", e.key)))?;
        let axis_values = SweepValues::parse(&e.value).map_err(|m| CliError::at(e.line, m))?;
        if axis_values.len() < 2 {
            return Err(CliError::at(
                e.line,
                format!("sweep axis '{}' needs at least 2 values", e.key),
            ));
        }
        axis_values.expand(spec).map_err(|m| CliError::at(e.line, m))?;
        let axis = SweepAxis {
            name: e.key.clone(),
            values: axis_values,
        };
        match sweep.iter_mut().find(|a| a.name == axis.name) {
            Some(existing) => *existing = axis,
            None => sweep.push(axis),
        }
    }
    if command == Command::Sweep {
        if sweep.is_empty() {
            return Err(CliError::config("sweep needs at least one axis in [sweep]"));
        }
        if sweep.len() > MAX_SWEEP_AXES {
            return Err(CliError::config(format!("at most {MAX_SWEEP_AXES} sweep axes allowed")));
        }
    }

    for spec in eval.params() {
        if values.contains_key(spec.name) || sweep.iter().any(|a| a.name == spec.name) {
            continue;
        }
        match spec.default {
            Some(d) => {
                values.insert(spec.name.to_string(), d.to_string());
            }
            None => {
                return Err(CliError::config(format!(
                    "missing required key '{}' for {eval}",
                    spec.name
                )))
            }
        }
    }

    Ok(RunConfig {
        command,
        target: target.map(|(t, _)| t),
        params: values,
        sweep,
        seed,
        trials,
        workers,
        output,
        format,
    })
}

pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    build(&parse_text(text)?)
}

impl RunConfig {
    /// The command evaluated per row: the sweep target or the command itself.
    pub fn evaluated(&self) -> Command {
        self.target.unwrap_or(self.command)
    }

    fn write(&self, with_output: bool) -> String {
        let mut s = String::from("[command]\n");
        let _ = writeln!(s, "command = {}", self.command);
        if let Some(t) = self.target {
            let _ = writeln!(s, "target = {t}");
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "format = {}", self.format.as_str());
        if with_output {
            if let Some(o) = &self.output {
                let _ = writeln!(s, "output = {}", o.display());
            }
        }
        for (k, v) in &self.params {
            let _ = writeln!(s, "{k} = {v}");
        }
        if !self.sweep.is_empty() {
            s.push_str("[sweep]\n");
            for a in &self.sweep {
                let _ = writeln!(s, "{} = {}", a.name, a.values);
            }
        }
        s
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn serialize(&self) -> String {
        self.write(true)
    }

    /// SHA-256 of the canonical form without the output path.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.write(false).as_bytes()))
    }

    pub fn get(&self, key: &str) -> CliResult<&str> {
        self.params
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CliError::config(format!("missing key '{key}'")))
    }

    pub fn purify_config(&self) -> CliResult<PurifyConfig> {
        if self.evaluated() != Command::Purify {
            return Err(CliError::config("not a purify configuration"));
        }
        let num = |k: &str| -> CliResult<usize> {
            self.get(k)?
                .parse()
                .map_err(|_| CliError::config(format!("{k} is not an integer")))
        };
        let p: f64 = self
            .get("p")?
            .parse()
            .map_err(|_| CliError::config("p is not a number"))?;
        let decoder = match self.get("decoder")? {
            "hadamard" => DecoderKind::HadamardPair,
            _ => DecoderKind::FourierConjugatePair,
        };
        let cfg = PurifyConfig::new(num("n")?, num("m")?, p, decoder)?;
        Ok(cfg.with_offset(num("offset")?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_sections() {
        let raw = parse_text("# top\ncommand = filter # trailing\n\n[sweep]\nT = 1, 2\n").unwrap();
        assert_eq!(raw.command.len(), 1);
        assert_eq!(raw.sweep[0].line, Some(5));
        assert!(matches!(
            parse_text("[bogus]"),
            Err(CliError::ConfigLine { line: 1, .. })
        ));
        assert!(matches!(parse_text("x\n"), Err(CliError::ConfigLine { line: 1, .. })));
    }

    #[test]
    fn grid_expansion() {
        let spec = ParamSpec {
            name: "T",
            default: None,
            kind: POS,
        };
        let g = SweepValues::parse("1:4:4").unwrap();
        assert_eq!(g.expand(&spec).unwrap(), vec!["1", "2", "3", "4"]);
        assert!(SweepValues::parse("1:4:3").unwrap().expand(&spec).is_err());
        let f = SweepValues::parse("0.5 : 1 : 3").unwrap();
        assert_eq!(
            f.expand(&ParamSpec {
                name: "p",
                default: None,
                kind: UNIT
            })
            .unwrap(),
            vec!["0.5", "0.75", "1"]
        );
    }
}
