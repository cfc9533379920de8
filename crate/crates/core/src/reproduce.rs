// Copyright 2026 The errfilt Authors
// SPDX-License-Identifier: Apache-2.0

//! Self-check battery: every closed form in the library against its explicit
//! construction or Monte-Carlo estimate.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classical::{
    classical_outcome, coherent_current, coherent_current_monte_carlo, coherent_visibility_analytic,
    coherent_visibility_monte_carlo, mean_amplitude_analytic, mean_intensity_analytic, nonlinear_scaling_fit,
    visibility_analytic as classical_visibility_analytic, CoherentConfig, NoiseFunction,
};
use crate::codec::Codec;
use crate::error::{invalid, Result};
use crate::filtration::{
    bloch_average_monte_carlo, collective_bloch_average_analytic, p_success_analytic, run_exact, run_nonuniform,
    run_reduced, series_error_analytic, series_limit_analytic, series_two_segment_analytic, threshold_report,
    trivial_bloch_average_analytic, visibility_analytic, visibility_exact, ChannelNoise, FiltrationConfig,
    FiltrationOutcome,
};
use crate::hilbert::{phase, random_state, random_unitary, real, C64};
use crate::montecarlo::{Estimate, McPlan};
use crate::noise::{
    dephased_density_dilated, dephased_density_monte_carlo, InternalNoiseSpec, LengthModel, PhaseDistribution,
    PhaseNoiseSpec,
};
use crate::purification::{
    deferred_postselection_demo, fidelity_closed_form, fourier_decoder_a, p_success_closed_form, protocol1_explicit,
    protocol1_fidelity, protocol1_fidelity_from_y, protocol2_explicit, protocol2_fidelity, purify, purify_blocks,
    rho_after_noise, rho_after_noise_dilated, total_success_closed_form, DecoderKind, PurifyConfig,
};

/// Standard errors allowed between a Monte-Carlo estimate and its closed form.
pub const SIGMA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatteryOptions {
    pub trials: u64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        Self {
            trials: 100_000,
            seed: 2026,
            workers: 4,
        }
    }
}

impl BatteryOptions {
    fn plan(&self, stream: u64) -> Result<McPlan> {
        McPlan::new(self.trials, self.seed.wrapping_add(stream), self.workers)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(&BatteryOptions) -> Result<(bool, String)>;

const CHECKS: [(&str, Check); 12] = [
    ("success-probability", check_success),
    ("visibility", check_visibility),
    ("nonuniform", check_nonuniform),
    ("series", check_series),
    ("purification", check_purification),
    ("codec-equivalence", check_codecs),
    ("collective", check_collective),
    ("internal-dof", check_internal),
    ("noise-equivalence", check_noise_equivalence),
    ("coherent-classical", check_classical),
    ("protocols", check_protocols),
    ("thresholds", check_thresholds),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Runs one check by 1-based id. A check that errors counts as failed.
pub fn run_check(id: usize, opts: &BatteryOptions) -> Result<CheckResult> {
    let (name, f) = *CHECKS
        .get(id.wrapping_sub(1))
        .ok_or_else(|| invalid(format!("no check with id {id}")))?;
    let (passed, detail) = match f(opts) {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Ok(CheckResult {
        id,
        name,
        passed,
        detail,
    })
}

/// `subset` is `all` or a comma-separated list of ids and names.
pub fn run_battery(subset: &str, opts: &BatteryOptions) -> Result<Vec<CheckResult>> {
    let ids: Vec<usize> = if subset.trim() == "all" {
        (1..=CHECKS.len()).collect()
    } else {
        subset
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                tok.parse::<usize>()
                    .ok()
                    .filter(|i| (1..=CHECKS.len()).contains(i))
                    .or_else(|| CHECKS.iter().position(|(n, _)| *n == tok).map(|i| i + 1))
                    .ok_or_else(|| invalid(format!("unknown check '{tok}'")))
            })
            .collect::<Result<_>>()?
    };
    ids.into_iter().map(|id| run_check(id, opts)).collect()
}

/// Running maximum of absolute deviations.
#[derive(Default)]
struct MaxDiff(f64);

impl MaxDiff {
    fn add(&mut self, a: f64, b: f64) {
        let d = (a - b).abs();
        self.0 = if d.is_nan() { f64::INFINITY } else { self.0.max(d) };
    }

    fn within(&self, tol: f64) -> bool {
        self.0 <= tol
    }
}

/// Worst `|mean − value|/stderr` across a set of estimates.
#[derive(Default)]
struct Sigmas(f64);

impl Sigmas {
    fn add(&mut self, e: Estimate, value: f64) {
        let z = if e.agrees_with(value, 0.0) {
            0.0
        } else {
            (e.mean - value).abs() / e.stderr
        };
        self.0 = self.0.max(z);
    }

    fn within(&self) -> bool {
        self.0 <= SIGMA
    }
}

fn fourier_cfg(t: usize, alpha2: f64) -> Result<FiltrationConfig> {
    FiltrationConfig::uniform(Codec::fourier(t)?, alpha2)
}

fn check_success(_: &BatteryOptions) -> Result<(bool, String)> {
    let mut d = MaxDiff::default();
    for t in 1..=8 {
        for a2 in [0.5, 0.8, 0.9, 0.99] {
            d.add(run_exact(&fourier_cfg(t, a2)?)?.p_success, p_success_analytic(t, a2));
        }
    }
    Ok((d.within(1e-12), format!("max |dP| = {:.2e} over 32 cases", d.0)))
}

fn check_visibility(_: &BatteryOptions) -> Result<(bool, String)> {
    let mut d = MaxDiff::default();
    let mut t1 = MaxDiff::default();
    for t in 1..=8 {
        for a2 in [0.5, 0.8, 0.9, 0.99] {
            let cfg = FiltrationConfig::uniform(Codec::fourier(t)?.multiplexed(2)?, a2)?;
            let v = visibility_exact(&cfg)?.ok_or_else(|| invalid("two sources expected"))?;
            d.add(v, visibility_analytic(t, a2));
            if t == 1 {
                t1.add(v, a2);
            }
        }
    }
    Ok((
        d.within(1e-9) && t1.within(1e-9),
        format!("max |dV| = {:.2e}, T=1 vs |alpha|^2 {:.2e}", d.0, t1.0),
    ))
}

fn check_nonuniform(opts: &BatteryOptions) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (mut no, mut err) = (MaxDiff::default(), MaxDiff::default());
    let mut violations = 0;
    for _ in 0..100 {
        let t = rng.random_range(2..=8);
        let channels: Vec<(C64, C64)> = (0..t)
            .map(|_| {
                let a: f64 = rng.random();
                let b = (1.0 - a * a).sqrt();
                (
                    phase(rng.random::<f64>() * 2.0 * PI) * a,
                    phase(rng.random::<f64>() * 2.0 * PI) * b,
                )
            })
            .collect();
        let spec = PhaseNoiseSpec::new(channels)?.phase_aligned();
        let cfg = FiltrationConfig::new(Codec::fourier(t)?, ChannelNoise::Phase(spec.clone()))?;
        let rep = run_nonuniform(&cfg)?;
        no.add(rep.outcome.p_success_no_error, spec.alpha_mean().norm_sqr());
        let beta2: f64 = (0..t).map(|j| spec.beta(j).norm_sqr()).sum();
        err.add(rep.outcome.p_success_error, beta2 / (t * t) as f64);
        if !rep.bound_holds {
            violations += 1;
        }
    }
    Ok((
        no.within(1e-12) && err.within(1e-12) && violations == 0,
        format!(
            "max |dP_no-error| = {:.2e}, max |dP_error| = {:.2e}, bound violations {violations}/100",
            no.0, err.0
        ),
    ))
}

fn series_run(alpha2_total: f64, q: usize, t: usize, reduced: bool) -> Result<FiltrationOutcome> {
    let model = LengthModel::new(-alpha2_total.ln(), 1.0)?;
    let cfg = fourier_cfg(t, 1.0)?.with_segments(q)?.with_length_model(model)?;
    if reduced {
        run_reduced(&cfg)
    } else {
        run_exact(&cfg)
    }
}

fn check_series(_: &BatteryOptions) -> Result<(bool, String)> {
    let mut multi = MaxDiff::default();
    for q in 1..=3 {
        for t in 1..=4 {
            for a2 in [0.5, 0.81, 0.95] {
                let got = series_run(a2, q, t, false)?.p_success_error;
                multi.add(got, series_error_analytic(-f64::ln(a2), 1.0, q, t)?);
            }
        }
    }
    let mut two = MaxDiff::default();
    for t in 2..=4 {
        for alpha in [0.7, 0.81, 0.9, 0.99] {
            let got = series_run(alpha * alpha, 2, t, false)?.p_success_error;
            two.add(got, series_two_segment_analytic(alpha, t)?);
        }
    }
    let mut limit = MaxDiff::default();
    for t in 2..=4 {
        for a2 in [0.81, 0.9, 0.95, 0.99] {
            let got = series_run(a2, 64, t, true)?.p_success_error;
            limit.add(got, series_limit_analytic(f64::sqrt(a2), t)?);
        }
    }
    Ok((
        multi.within(1e-10) && two.within(1e-10) && limit.within(1e-4),
        format!(
            "Q<=3 max {:.2e}; two-segment max {:.2e}; Q=64 vs limit max {:.2e}",
            multi.0, two.0, limit.0
        ),
    ))
}

fn check_purification(opts: &BatteryOptions) -> Result<(bool, String)> {
    let (mut f, mut p, mut tot, mut noise) = (
        MaxDiff::default(),
        MaxDiff::default(),
        MaxDiff::default(),
        MaxDiff::default(),
    );
    for n in 1..=8 {
        for pv in [0.0, 0.3, 0.8, 1.0] {
            noise.add(
                rho_after_noise(n, pv)?.max_abs_diff(&rho_after_noise_dilated(n, pv)?),
                0.0,
            );
            for m in 1..=n {
                let cfg = PurifyConfig::new(n, m, pv, DecoderKind::FourierConjugatePair)?;
                let out = purify(&cfg)?;
                f.add(out.fidelity_f_prime, fidelity_closed_form(n, m, pv));
                p.add(out.p_success, p_success_closed_form(n, m, pv));
                let blocks: f64 = purify_blocks(&cfg)?.iter().map(|o| o.p_success).sum();
                tot.add(blocks, total_success_closed_form(n, m, pv));
            }
        }
    }
    let trend = |pv: f64, step: usize| {
        let dev: Vec<f64> = (2..=64)
            .step_by(step)
            .map(|n| (total_success_closed_form(n, 2, pv) - pv).abs())
            .collect();
        dev.windows(2).all(|w| w[1] <= w[0] + 1e-15)
    };
    let monotone = trend(0.8, 1) && [0.0, 0.3, 0.8, 1.0].iter().all(|&pv| trend(pv, 2));
    let deferred = deferred_postselection_demo(
        &PurifyConfig::new(6, 2, 0.8, DecoderKind::FourierConjugatePair)?.with_offset(2)?,
        opts.seed,
    )?;
    let ok = f.within(1e-12)
        && p.within(1e-12)
        && tot.within(1e-12)
        && noise.within(1e-12)
        && monotone
        && deferred.max_state_difference < 1e-12;
    Ok((
        ok,
        format!(
            "max |dF'| = {:.2e}, |dP| = {:.2e}, |dP_total| = {:.2e}, noise state {:.2e}, trend monotone {monotone}, deferred check {:.2e}",
            f.0, p.0, tot.0, noise.0, deferred.max_state_difference
        ),
    ))
}

fn outcome_diff(d: &mut MaxDiff, a: &FiltrationOutcome, b: &FiltrationOutcome) {
    d.add(a.p_success, b.p_success);
    d.add(a.p_success_no_error, b.p_success_no_error);
    d.add(a.p_success_error, b.p_success_error);
    d.add(a.conditional_fidelity, b.conditional_fidelity);
}

fn check_codecs(opts: &BatteryOptions) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut d = MaxDiff::default();
    let mut optimal = true;
    for t in [2, 4, 8] {
        let (f, h) = (Codec::fourier(t)?, Codec::hadamard(t)?);
        for codec in [&f, &h] {
            let rep = codec.validate();
            optimal &= rep.faithful && rep.optimal;
        }
        let mut specs: Vec<PhaseNoiseSpec> = [0.5, 0.8, 0.95]
            .iter()
            .map(|&a2| PhaseNoiseSpec::uniform(t, a2))
            .collect::<Result<_>>()?;
        let alphas: Vec<f64> = (0..t).map(|_| rng.random()).collect();
        specs.push(PhaseNoiseSpec::from_alphas(&alphas)?);
        for spec in specs {
            let a = run_exact(&FiltrationConfig::new(f.clone(), ChannelNoise::Phase(spec.clone()))?)?;
            let b = run_exact(&FiltrationConfig::new(h.clone(), ChannelNoise::Phase(spec))?)?;
            outcome_diff(&mut d, &a, &b);
        }
    }
    Ok((
        d.within(1e-12) && optimal,
        format!("max |fourier - hadamard| = {:.2e}, all optimal {optimal}", d.0),
    ))
}

fn check_collective(opts: &BatteryOptions) -> Result<(bool, String)> {
    let mut s = Sigmas::default();
    let mut beats = true;
    for (i, a2) in [0.5, 0.8, 0.95].into_iter().enumerate() {
        let plan = opts.plan(i as u64)?;
        let coll = FiltrationConfig::uniform(Codec::collective_fourier(2, 3)?, a2)?;
        let triv = FiltrationConfig::uniform(Codec::identity(2)?, a2)?;
        let c = bloch_average_monte_carlo(&coll, &plan)?;
        let tr = bloch_average_monte_carlo(&triv, &plan)?;
        s.add(c, collective_bloch_average_analytic(a2));
        s.add(tr, trivial_bloch_average_analytic(a2));
        beats &= c.mean > tr.mean && collective_bloch_average_analytic(a2) > trivial_bloch_average_analytic(a2);
    }
    Ok((
        s.within() && beats,
        format!("worst deviation {:.2} sigma, collective beats trivial {beats}", s.0),
    ))
}

fn check_internal(_: &BatteryOptions) -> Result<(bool, String)> {
    let mut d = MaxDiff::default();
    for t in [2, 4] {
        for a2 in [0.5, 0.8, 0.95] {
            for internal in [[real(1.0), real(0.0)], [real(0.6), C64::new(0.0, 0.8)]] {
                let noise = ChannelNoise::Internal {
                    spec: InternalNoiseSpec::pauli(a2)?,
                    internal_state: internal.to_vec(),
                };
                let out = run_exact(&FiltrationConfig::new(Codec::fourier(t)?, noise)?)?;
                d.add(out.p_success_error, (1.0 - a2) / t as f64);
            }
        }
    }
    Ok((d.within(1e-12), format!("max |dP_error| = {:.2e}", d.0)))
}

fn check_noise_equivalence(opts: &BatteryOptions) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst: f64 = 0.0;
    for (i, n) in [2, 3].into_iter().enumerate() {
        let psi = random_state(n, &mut rng);
        let alphas: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..1.0)).collect();
        let spec = PhaseNoiseSpec::from_alphas(&alphas)?;
        let exact = dephased_density_dilated(&psi, &spec)?;
        let mc = dephased_density_monte_carlo(&psi, &spec, PhaseDistribution::default(), &opts.plan(i as u64)?)?;
        worst = worst.max(mc.max_sigma_deviation(exact.matrix()));
    }
    Ok((worst <= SIGMA, format!("worst entry deviation {worst:.2} sigma")))
}

fn check_classical(opts: &BatteryOptions) -> Result<(bool, String)> {
    let mut s = Sigmas::default();
    let dist = PhaseDistribution::default();
    let lam = C64::new(1.0, 0.0);
    let alpha = C64::new(0.8f64.sqrt(), 0.0);
    for (i, phi) in [0.0, PI / 3.0].into_iter().enumerate() {
        let cfg = CoherentConfig::new(lam, phi, 4, alpha)?;
        s.add(
            coherent_current_monte_carlo(&cfg, &opts.plan(i as u64)?, dist),
            coherent_current(&cfg),
        );
    }
    let cfg = CoherentConfig::new(lam, 0.0, 4, alpha)?;
    s.add(
        coherent_visibility_monte_carlo(&cfg, &opts.plan(2)?, dist),
        coherent_visibility_analytic(4, 0.8),
    );

    let a = C64::new(1.0, 0.0);
    let nf = NoiseFunction::linear_phase(0.8f64.sqrt())?;
    let mut amp_sigma: f64 = 0.0;
    let mut first: Option<(f64, f64)> = None;
    for (i, t) in [1, 2, 4, 8].into_iter().enumerate() {
        let out = classical_outcome(a, t, &nf, &opts.plan(10 + i as u64)?)?;
        s.add(out.mean_intensity, mean_intensity_analytic(a, t, &nf)?);
        s.add(out.visibility, classical_visibility_analytic(a, t, &nf)?);
        s.add(
            Estimate {
                mean: out.mean_amplitude.re,
                stderr: out.amplitude_stderr.0,
            },
            mean_amplitude_analytic(a, t, &nf).re,
        );
        let (re, se) = (out.mean_amplitude.re, out.amplitude_stderr.0);
        match first {
            None => first = Some((re, se)),
            Some((r0, s0)) => amp_sigma = amp_sigma.max((re - r0).abs() / s0.hypot(se)),
        }
    }
    let consistent = (1..=8).all(|t| {
        (coherent_visibility_analytic(t, 0.8) - classical_visibility_analytic(a, t, &nf).unwrap_or(f64::NAN)).abs()
            < 1e-12
    });
    let nl = NoiseFunction::nonlinear_phase(0.9, 0.1)?;
    let fit = nonlinear_scaling_fit(a, &[2, 4, 8, 16, 32], &nl, &opts.plan(20)?)?;
    let fit_ok = (fit.linear_exponent - 1.0).abs() <= 0.2 && (fit.nonlinear_exponent - 3.0).abs() <= 0.2;
    Ok((
        s.within() && amp_sigma <= SIGMA && consistent && fit_ok,
        format!(
            "worst deviation {:.2} sigma, amplitude T-drift {amp_sigma:.2} sigma, coherent/classical agree {consistent}, exponents {:.3} / {:.3}",
            s.0, fit.linear_exponent, fit.nonlinear_exponent
        ),
    ))
}

fn check_protocols(opts: &BatteryOptions) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut p1 = MaxDiff::default();
    let mut p1_random = MaxDiff::default();
    let mut schwarz = true;
    for s in 1..=8 {
        for r in 1..=s {
            for p in [0.0, 0.3, 0.8, 1.0] {
                let rep = protocol1_explicit(&fourier_decoder_a(s), r, p)?;
                p1.add(rep.fidelity, protocol1_fidelity(s, r, p)?);
            }
            let u = random_unitary(s, &mut rng);
            let rep = protocol1_explicit(&u, r, 0.6)?;
            p1_random.add(rep.fidelity, protocol1_fidelity_from_y(s, r, 0.6, rep.y));
            schwarz &= rep.y >= rep.y_bound - 1e-12;
        }
    }
    let mut p2 = MaxDiff::default();
    for s in 1..=8 {
        let a = random_state(s, &mut rng);
        for t in 1..=8 {
            p2.add(protocol2_explicit(&a, 0.7, t)?, protocol2_fidelity(&a, 0.7, t)?);
        }
    }
    let mut monotone = true;
    for p in [0.3, 0.8] {
        for r in [1, 2] {
            let f: Vec<f64> = (r..=64).map(|s| protocol1_fidelity(s, r, p)).collect::<Result<_>>()?;
            monotone &= f.windows(2).all(|w| w[1] >= w[0] - 1e-15);
        }
    }
    for s in 2..=8 {
        let a = random_state(s, &mut rng);
        for a2 in [0.3, 0.8] {
            let f: Vec<f64> = (1..=64).map(|t| protocol2_fidelity(&a, a2, t)).collect::<Result<_>>()?;
            monotone &= f.windows(2).all(|w| w[1] >= w[0] - 1e-15);
        }
    }
    Ok((
        p1.within(1e-12) && p1_random.within(1e-12) && schwarz && p2.within(1e-12) && monotone,
        format!(
            "protocol 1 max {:.2e} (random decoders {:.2e}, Y bound {schwarz}); protocol 2 max {:.2e}; monotone {monotone}",
            p1.0, p1_random.0, p2.0
        ),
    ))
}

fn check_thresholds(_: &BatteryOptions) -> Result<(bool, String)> {
    let eps = 1e-12;
    let probes = [
        (0.85, false, true),
        (0.85 + eps, true, true),
        (0.85 - eps, false, true),
        (0.5, false, false),
        (0.5 + eps, false, true),
        (0.5 - eps, false, false),
        (1.0, true, true),
        (0.0, false, false),
    ];
    let mut bad = 0;
    for (f, bb84, werner) in probes {
        let r = threshold_report(f)?;
        if r.bb84_secure != bb84 || r.werner_entangled != werner {
            bad += 1;
        }
    }
    let rejects = threshold_report(1.5).is_err() && threshold_report(-0.1).is_err();
    Ok((
        bad == 0 && rejects,
        format!(
            "{} boundary probes, {bad} mismatches, out-of-range rejected {rejects}",
            probes.len()
        ),
    ))
}
