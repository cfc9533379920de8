// Copyright 2026 The errfilt Authors
// SPDX-License-Identifier: Apache-2.0

//! Runs a validated [`RunConfig`] and collects the results as a table.

use std::collections::BTreeMap;

use errfilt::classical::{self, CoherentConfig, NoiseFunction};
use errfilt::codec::Codec;
use errfilt::filtration::{self, FiltrationConfig, FiltrationOutcome};
use errfilt::hilbert::{real, C64};
use errfilt::montecarlo::{Estimate, McPlan};
use errfilt::noise::{PhaseDistribution, PhaseNoiseSpec};
use errfilt::purification::{self as pur, fourier_decoder_a};
use errfilt::reproduce::{run_battery, BatteryOptions};

use crate::config::{Command, RunConfig};
use crate::error::{CliError, CliResult};

/// Largest deviation tolerated between codecs that should agree.
pub const CODEC_AGREEMENT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
    Empty,
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Self::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Self::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Self::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Self::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Self::Text(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Self::Empty, Into::into)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Typed view of one parameter set.
struct Params<'a> {
    map: &'a BTreeMap<String, String>,
}

impl Params<'_> {
    fn text(&self, k: &str) -> CliResult<&str> {
        self.map
            .get(k)
            .map(String::as_str)
            .ok_or_else(|| CliError::config(format!("missing key '{k}'")))
    }

    fn int(&self, k: &str) -> CliResult<usize> {
        self.text(k)?
            .parse()
            .map_err(|_| CliError::config(format!("{k} must be an integer")))
    }

    fn float(&self, k: &str) -> CliResult<f64> {
        self.text(k)?
            .parse()
            .map_err(|_| CliError::config(format!("{k} must be a number")))
    }
}

/// Monte-Carlo settings shared by every row.
struct Mc {
    plan: Option<McPlan>,
}

impl Mc {
    fn new(cfg: &RunConfig) -> CliResult<Self> {
        let plan = if cfg.trials == 0 {
            None
        } else {
            Some(McPlan::new(cfg.trials, cfg.seed, cfg.workers)?)
        };
        Ok(Self { plan })
    }
}

fn est(e: Option<Estimate>) -> [Cell; 2] {
    match e {
        Some(e) => [e.mean.into(), e.stderr.into()],
        None => [Cell::Empty, Cell::Empty],
    }
}

pub fn columns(command: Command) -> &'static [&'static str] {
    match command {
        Command::Filter => &[
            "T",
            "S",
            "Q",
            "codec",
            "alpha2",
            "p_success",
            "p_success_no_error",
            "p_success_error",
            "p_error_given_success",
            "conditional_fidelity",
            "visibility",
            "mc_p_success",
            "mc_p_success_stderr",
            "mc_conditional_fidelity",
            "mc_conditional_fidelity_stderr",
            "mc_visibility",
            "mc_visibility_stderr",
        ],
        Command::Series => &[
            "T",
            "Q",
            "alpha2",
            "error",
            "error_analytic",
            "error_single_module",
            "error_limit",
        ],
        Command::Purify => &[
            "n",
            "m",
            "p",
            "decoder",
            "offset",
            "fidelity_unfiltered",
            "fidelity",
            "fidelity_closed_form",
            "p_success",
            "p_success_total",
            "blocks",
        ],
        Command::Protocol1 => &[
            "S",
            "R",
            "p",
            "fidelity",
            "fidelity_explicit",
            "p_success",
            "y",
            "y_bound",
        ],
        Command::Protocol2 => &["S", "T", "alpha2", "fidelity", "fidelity_explicit"],
        Command::Classical => &[
            "T",
            "A",
            "noise",
            "mean_intensity",
            "fluctuation",
            "visibility",
            "mc_mean_intensity",
            "mc_mean_intensity_stderr",
            "mc_fluctuation",
            "mc_fluctuation_stderr",
            "mc_visibility",
            "mc_visibility_stderr",
        ],
        Command::Coherent => &[
            "T",
            "alpha2",
            "phi",
            "lambda",
            "current",
            "visibility",
            "visibility_sweep",
            "mc_current",
            "mc_current_stderr",
            "mc_visibility",
            "mc_visibility_stderr",
        ],
        Command::CompareCodecs => &[
            "T",
            "alpha2",
            "codec",
            "p_success",
            "p_success_error",
            "conditional_fidelity",
            "visibility",
            "max_deviation",
        ],
        Command::Thresholds => &["fidelity", "bb84_secure", "werner_entangled"],
        Command::Reproduce => &["id", "name", "passed", "detail"],
        Command::Sweep => &[],
    }
}

/// Evaluates the configuration. Returns the table even when a check inside
/// it failed; the failure is reported as the second element.
pub fn execute(cfg: &RunConfig) -> CliResult<(Table, Option<CliError>)> {
    let mc = Mc::new(cfg)?;
    match cfg.command {
        Command::Sweep => sweep(cfg, &mc),
        Command::Reproduce => reproduce(cfg),
        c => {
            let mut table = Table::new(columns(c));
            let failure = run_into(c, &Params { map: &cfg.params }, &mc, &mut table)?;
            Ok((table, failure))
        }
    }
}

fn run_into(command: Command, p: &Params, mc: &Mc, table: &mut Table) -> CliResult<Option<CliError>> {
    match command {
        Command::Filter => table.push(filter(p, mc)?),
        Command::Series => table.push(series(p)?),
        Command::Purify => table.push(purify(p)?),
        Command::Protocol1 => table.push(protocol1(p)?),
        Command::Protocol2 => table.push(protocol2(p)?),
        Command::Classical => table.push(classical_row(p, mc)?),
        Command::Coherent => table.push(coherent(p, mc)?),
        Command::Thresholds => table.push(thresholds(p)?),
        Command::CompareCodecs => return compare_codecs(p, table),
        Command::Sweep | Command::Reproduce => return Err(CliError::config(format!("'{command}' cannot be nested"))),
    }
    Ok(None)
}

fn sweep(cfg: &RunConfig, mc: &Mc) -> CliResult<(Table, Option<CliError>)> {
    let target = cfg.evaluated();
    let mut axes: Vec<(String, Vec<String>)> = Vec::with_capacity(cfg.sweep.len());
    for a in &cfg.sweep {
        let spec = target
            .spec(&a.name)
            .ok_or_else(|| CliError::config(format!("unknown sweep axis '{}'", a.name)))?;
        axes.push((a.name.clone(), a.values.expand(spec).map_err(CliError::Config)?));
    }
    let mut cols = vec!["point"];
    cols.extend_from_slice(columns(target));
    let mut table = Table::new(&cols);
    let mut failure = None;
    let total: usize = axes.iter().map(|(_, v)| v.len()).product();
    for point in 0..total {
        let mut params = cfg.params.clone();
        let mut rest = point;
        for (name, values) in axes.iter().rev() {
            params.insert(name.clone(), values[rest % values.len()].clone());
            rest /= values.len();
        }
        let mut sub = Table::new(columns(target));
        if let Some(f) = run_into(target, &Params { map: &params }, mc, &mut sub)? {
            failure.get_or_insert(f);
        }
        for row in sub.rows {
            let mut r = vec![Cell::from(point)];
            r.extend(row);
            table.push(r);
        }
    }
    Ok((table, failure))
}

fn build_codec(kind: &str, s: usize, t: usize) -> CliResult<Codec> {
    let single = |c: Codec| if s == 1 { Ok(c) } else { c.multiplexed(s) };
    Ok(match kind {
        "fourier" => single(Codec::fourier(t)?)?,
        "hadamard" => single(Codec::hadamard(t)?)?,
        "collective" => Codec::collective_fourier(s, t)?,
        "identity" => {
            if s != t {
                return Err(CliError::config("identity codec needs T = S"));
            }
            Codec::identity(s)?
        }
        other => return Err(CliError::config(format!("unknown codec '{other}'"))),
    })
}

fn distribution(name: &str) -> PhaseDistribution {
    match name {
        "wrapped-gaussian" => PhaseDistribution::WrappedGaussian,
        _ => PhaseDistribution::PointMassMixture,
    }
}

fn filter(p: &Params, mc: &Mc) -> CliResult<Vec<Cell>> {
    let (t, s, q) = (p.int("T")?, p.int("S")?, p.int("Q")?);
    let alpha2 = p.float("alpha2")?;
    let kind = p.text("codec")?;
    let codec = build_codec(kind, s, t)?;
    let t_tot = codec.t_tot();
    let mut cfg = FiltrationConfig::uniform(codec, alpha2)?.with_segments(q)?;
    let module = p.float("module_alpha2")?;
    if module < 1.0 {
        cfg = cfg.with_module_noise(PhaseNoiseSpec::uniform(t_tot, module)?)?;
    }
    let out: FiltrationOutcome = filtration::run_exact(&cfg)?;
    let sampled = match &mc.plan {
        Some(plan) => Some(filtration::run_monte_carlo(
            &cfg,
            plan,
            distribution(p.text("distribution")?),
        )?),
        None => None,
    };
    let mut row: Vec<Cell> = vec![
        t.into(),
        s.into(),
        q.into(),
        kind.into(),
        alpha2.into(),
        out.p_success.into(),
        out.p_success_no_error.into(),
        out.p_success_error.into(),
        out.p_error_given_success().into(),
        out.conditional_fidelity.into(),
        out.visibility.into(),
    ];
    row.extend(est(sampled.map(|m| m.p_success)));
    row.extend(est(sampled.map(|m| m.conditional_fidelity)));
    row.extend(est(sampled.and_then(|m| m.visibility)));
    Ok(row)
}

fn series(p: &Params) -> CliResult<Vec<Cell>> {
    let (t, q) = (p.int("T")?, p.int("Q")?);
    let alpha2 = p.float("alpha2")?;
    if alpha2 <= 0.0 {
        return Err(CliError::config("alpha2 must be > 0 for series"));
    }
    let seg = alpha2.powf(1.0 / q as f64);
    let cfg = FiltrationConfig::uniform(Codec::fourier(t)?, seg)?.with_segments(q)?;
    let out = filtration::run_reduced(&cfg)?;
    let analytic = filtration::series_error_analytic(-alpha2.ln(), 1.0, q, t)?;
    Ok(vec![
        t.into(),
        q.into(),
        alpha2.into(),
        out.p_success_error.into(),
        analytic.into(),
        ((1.0 - alpha2) / t as f64).into(),
        filtration::series_limit_analytic(alpha2.sqrt(), t)?.into(),
    ])
}

fn purify(p: &Params) -> CliResult<Vec<Cell>> {
    let (n, m, offset) = (p.int("n")?, p.int("m")?, p.int("offset")?);
    let prob = p.float("p")?;
    let decoder = match p.text("decoder")? {
        "hadamard" => pur::DecoderKind::HadamardPair,
        _ => pur::DecoderKind::FourierConjugatePair,
    };
    let name = decoder.name();
    let cfg = pur::PurifyConfig::new(n, m, prob, decoder)?.with_offset(offset)?;
    let out = pur::purify(&cfg)?;
    Ok(vec![
        n.into(),
        m.into(),
        prob.into(),
        name.into(),
        offset.into(),
        pur::fidelity_unfiltered(m, prob).into(),
        out.fidelity_f_prime.into(),
        pur::fidelity_closed_form(n, m, prob).into(),
        out.p_success.into(),
        out.p_success_total.into(),
        out.blocks.into(),
    ])
}

fn protocol1(p: &Params) -> CliResult<Vec<Cell>> {
    let (s, r) = (p.int("S")?, p.int("R")?);
    let prob = p.float("p")?;
    let f = pur::protocol1_fidelity(s, r, prob)?;
    let rep = pur::protocol1_explicit(&fourier_decoder_a(s), r, prob)?;
    Ok(vec![
        s.into(),
        r.into(),
        prob.into(),
        f.into(),
        rep.fidelity.into(),
        rep.p_success.into(),
        rep.y.into(),
        rep.y_bound.into(),
    ])
}

fn protocol2(p: &Params) -> CliResult<Vec<Cell>> {
    let (s, t) = (p.int("S")?, p.int("T")?);
    let alpha2 = p.float("alpha2")?;
    let a = vec![real(1.0 / (s as f64).sqrt()); s];
    Ok(vec![
        s.into(),
        t.into(),
        alpha2.into(),
        pur::protocol2_fidelity(&a, alpha2, t)?.into(),
        pur::protocol2_explicit(&a, alpha2, t)?.into(),
    ])
}

fn noise_function(p: &Params) -> CliResult<NoiseFunction> {
    let alpha = p.float("alpha")?;
    Ok(match p.text("noise")? {
        "linear-amplitude" => NoiseFunction::linear_amplitude(p.float("sigma")?)?,
        "nonlinear-phase" => NoiseFunction::nonlinear_phase(alpha, p.float("phi_std")?)?,
        "deterministic" => NoiseFunction::Deterministic(real(alpha)),
        _ => NoiseFunction::linear_phase(alpha)?,
    })
}

fn classical_row(p: &Params, mc: &Mc) -> CliResult<Vec<Cell>> {
    let t = p.int("T")?;
    let a: C64 = real(p.float("A")?);
    let nf = noise_function(p)?;
    let sampled = match &mc.plan {
        Some(plan) => Some(classical::classical_outcome(a, t, &nf, plan)?),
        None => None,
    };
    let mut row: Vec<Cell> = vec![
        t.into(),
        a.re.into(),
        nf.kind().name().into(),
        classical::mean_intensity_analytic(a, t, &nf)?.into(),
        classical::fluctuation_analytic(a, t, &nf)?.into(),
        classical::visibility_analytic(a, t, &nf)?.into(),
    ];
    row.extend(est(sampled.map(|o| o.mean_intensity)));
    row.extend(est(sampled.map(|o| o.fluctuation)));
    row.extend(est(sampled.map(|o| o.visibility)));
    Ok(row)
}

fn coherent(p: &Params, mc: &Mc) -> CliResult<Vec<Cell>> {
    let t = p.int("T")?;
    let (alpha2, phi, lambda) = (p.float("alpha2")?, p.float("phi")?, p.float("lambda")?);
    let cfg = CoherentConfig::new(real(lambda), phi, t, real(alpha2.sqrt()))?;
    let dist = PhaseDistribution::default();
    let mut row: Vec<Cell> = vec![
        t.into(),
        alpha2.into(),
        phi.into(),
        lambda.into(),
        classical::coherent_current(&cfg).into(),
        classical::coherent_visibility_analytic(t, alpha2).into(),
        classical::coherent_visibility_sweep(&cfg).into(),
    ];
    row.extend(est(mc
        .plan
        .as_ref()
        .map(|plan| classical::coherent_current_monte_carlo(&cfg, plan, dist))));
    row.extend(est(mc
        .plan
        .as_ref()
        .map(|plan| classical::coherent_visibility_monte_carlo(&cfg, plan, dist))));
    Ok(row)
}

fn thresholds(p: &Params) -> CliResult<Vec<Cell>> {
    let f = p.float("fidelity")?;
    let r = filtration::threshold_report(f)?;
    Ok(vec![f.into(), r.bb84_secure.into(), r.werner_entangled.into()])
}

/// Fourier and Hadamard codecs on two multiplexed sources; every figure of
/// merit must agree.
fn compare_codecs(p: &Params, table: &mut Table) -> CliResult<Option<CliError>> {
    let t = p.int("T")?;
    let alpha2 = p.float("alpha2")?;
    let mut results = Vec::new();
    for kind in ["fourier", "hadamard"] {
        let cfg = FiltrationConfig::uniform(build_codec(kind, 2, t)?, alpha2)?;
        results.push((kind, filtration::run_exact(&cfg)?));
    }
    let base = results[0].1;
    let mut worst: f64 = 0.0;
    for (kind, out) in &results {
        let dev = [
            out.p_success - base.p_success,
            out.p_success_error - base.p_success_error,
            out.conditional_fidelity - base.conditional_fidelity,
            out.visibility.unwrap_or(0.0) - base.visibility.unwrap_or(0.0),
        ]
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()));
        worst = worst.max(dev);
        table.push(vec![
            t.into(),
            alpha2.into(),
            (*kind).into(),
            out.p_success.into(),
            out.p_success_error.into(),
            out.conditional_fidelity.into(),
            out.visibility.into(),
            dev.into(),
        ]);
    }
    Ok((worst > CODEC_AGREEMENT)
        .then(|| CliError::Check(format!("codecs disagree by {worst:e} at T={t}, alpha2={alpha2}"))))
}

/// `trials = 0` falls back to the battery's own default sample size.
fn reproduce(cfg: &RunConfig) -> CliResult<(Table, Option<CliError>)> {
    let mut opts = BatteryOptions {
        seed: cfg.seed,
        workers: cfg.workers,
        ..BatteryOptions::default()
    };
    if cfg.trials > 0 {
        opts.trials = cfg.trials;
    }
    let subset = cfg.get("subset")?;
    let results = run_battery(subset, &opts)?;
    let mut table = Table::new(columns(Command::Reproduce));
    let mut failed = Vec::new();
    for r in results {
        if !r.passed {
            failed.push(r.name);
        }
        table.push(vec![r.id.into(), r.name.into(), r.passed.into(), r.detail.into()]);
    }
    let failure = (!failed.is_empty()).then(|| CliError::Check(format!("failed: {}", failed.join(", "))));
    Ok((table, failure))
}
