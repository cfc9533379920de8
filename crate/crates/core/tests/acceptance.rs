// Copyright 2026 The errfilt Authors
// SPDX-License-Identifier: Apache-2.0

//! Acceptance gate. Each criterion compares the library's explicit
//! constructions and Monte-Carlo estimates against reference values computed
//! here, and prints one PASS/FAIL line.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use errfilt::classical::{
    classical_outcome, coherent_current_monte_carlo, coherent_visibility_monte_carlo, nonlinear_scaling_fit,
    CoherentConfig, NoiseFunction,
};
use errfilt::codec::Codec;
use errfilt::filtration::{
    bloch_average_monte_carlo, run_exact, run_nonuniform, run_reduced, threshold_report, visibility_exact,
    ChannelNoise, FiltrationConfig,
};
use errfilt::hilbert::{phase, random_state, random_unitary, real, C64};
use errfilt::montecarlo::{Estimate, McPlan};
use errfilt::noise::{
    dephased_density_dilated, dephased_density_monte_carlo, InternalNoiseSpec, LengthModel, PhaseDistribution,
    PhaseNoiseSpec,
};
use errfilt::purification::{
    fourier_decoder_a, protocol1_explicit, protocol2_explicit, purify, purify_blocks, DecoderKind, PurifyConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;
type Criterion = (&'static str, fn() -> Outcome);

const SEED: u64 = 20_260_101;
const TRIALS: u64 = 100_000;
const WORKERS: usize = 4;

fn plan(stream: u64) -> McPlan {
    McPlan::new(TRIALS, SEED + stream, WORKERS).expect("valid plan")
}

fn within(e: Estimate, value: f64) -> f64 {
    let d = (e.mean - value).abs();
    if d <= 1e-12 {
        0.0
    } else {
        d / e.stderr
    }
}

fn fourier(t: usize, a2: f64) -> FiltrationConfig {
    FiltrationConfig::uniform(Codec::fourier(t).unwrap(), a2).unwrap()
}

fn success_probability() -> Outcome {
    let mut worst: f64 = 0.0;
    for t in 1..=8 {
        for a2 in [0.5, 0.8, 0.9, 0.99] {
            let expect = a2 + (1.0 - a2) / t as f64;
            worst = worst.max((run_exact(&fourier(t, a2))?.p_success - expect).abs());
        }
    }
    Ok((worst <= 1e-12, format!("max deviation {worst:.2e} (tol 1e-12)")))
}

fn visibility() -> Outcome {
    let mut worst: f64 = 0.0;
    for t in 1..=8 {
        for a2 in [0.5, 0.8, 0.9, 0.99] {
            let cfg = FiltrationConfig::uniform(Codec::fourier(t)?.multiplexed(2)?, a2)?;
            let v = visibility_exact(&cfg)?.expect("two sources");
            let tf = t as f64;
            let expect = tf * a2 / (tf * a2 + 1.0 - a2);
            worst = worst.max((v - expect).abs());
            if t == 1 {
                worst = worst.max((v - a2).abs());
            }
        }
    }
    Ok((worst <= 1e-9, format!("max deviation {worst:.2e} (tol 1e-9)")))
}

fn nonuniform_channels() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
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
        let mean: C64 = spec.channels().iter().map(|(a, _)| a).sum::<C64>() / t as f64;
        let beta2: f64 = spec.channels().iter().map(|(_, b)| b.norm_sqr()).sum();
        let tf = t as f64;
        let cfg = FiltrationConfig::new(Codec::fourier(t)?, ChannelNoise::Phase(spec))?;
        let out = run_nonuniform(&cfg)?.outcome;
        worst = worst.max((out.p_success_no_error - mean.norm_sqr()).abs());
        worst = worst.max((out.p_success_error - beta2 / (tf * tf)).abs());
        if out.p_success_error > (1.0 - mean.norm_sqr()) / tf + 1e-12 {
            violations += 1;
        }
    }
    Ok((
        worst <= 1e-12 && violations == 0,
        format!("max deviation {worst:.2e} (tol 1e-12), bound violated on {violations}/100"),
    ))
}

fn series_cfg(total_a2: f64, q: usize, t: usize) -> FiltrationConfig {
    let model = LengthModel::new(-total_a2.ln(), 1.0).unwrap();
    fourier(t, 1.0)
        .with_segments(q)
        .unwrap()
        .with_length_model(model)
        .unwrap()
}

fn series() -> Outcome {
    let mut multi: f64 = 0.0;
    for q in 1..=3 {
        for t in 1..=4 {
            for a2 in [0.5f64, 0.81, 0.95] {
                let seg = a2.powf(1.0 / q as f64);
                let expect = (seg + (1.0 - seg) / t as f64).powi(q as i32) - a2;
                multi = multi.max((run_exact(&series_cfg(a2, q, t))?.p_success_error - expect).abs());
            }
        }
    }
    let mut two: f64 = 0.0;
    for t in 2..=4 {
        for alpha in [0.7, 0.81, 0.9, 0.99] {
            let tf = t as f64;
            let expect = (1.0 - alpha) * (1.0 + 2.0 * tf * alpha - alpha) / (tf * tf);
            let got = run_exact(&series_cfg(alpha * alpha, 2, t))?.p_success_error;
            two = two.max((got - expect).abs());
        }
    }
    let mut limit: f64 = 0.0;
    for t in 2..=4 {
        for a2 in [0.81f64, 0.9, 0.95, 0.99] {
            let tf = t as f64;
            let alpha: f64 = a2.sqrt();
            let expect = alpha.powf(2.0 * (tf - 1.0) / tf) - a2;
            let got = run_reduced(&series_cfg(a2, 64, t))?.p_success_error;
            limit = limit.max((got - expect).abs());
        }
    }
    Ok((
        multi <= 1e-10 && two <= 1e-10 && limit <= 1e-4,
        format!("Q<=3 {multi:.2e}, two-segment {two:.2e} (tol 1e-10); Q=64 vs limit {limit:.2e} (tol 1e-4)"),
    ))
}

fn purification() -> Outcome {
    let f_prime = |n: f64, m: f64, p: f64| ((n - 1.0) * p + 1.0) / ((n - m) * p + m);
    let p_succ = |n: f64, m: f64, p: f64| p * m / n + (1.0 - p) * m * m / (n * n);
    let mut worst: f64 = 0.0;
    for n in 1..=8usize {
        for m in 1..=n {
            for p in [0.0, 0.3, 0.8, 1.0] {
                let cfg = PurifyConfig::new(n, m, p, DecoderKind::FourierConjugatePair)?;
                let out = purify(&cfg)?;
                let (nf, mf) = (n as f64, m as f64);
                worst = worst.max((out.fidelity_f_prime - f_prime(nf, mf, p)).abs());
                worst = worst.max((out.p_success - p_succ(nf, mf, p)).abs());
                let total: f64 = purify_blocks(&cfg)?.iter().map(|o| o.p_success).sum();
                worst = worst.max((total - (n / m) as f64 * p_succ(nf, mf, p)).abs());
            }
        }
    }
    let total = |n: usize, p: f64| (n / 2) as f64 * p_succ(n as f64, 2.0, p);
    let mut explicit: f64 = 0.0;
    for n in 2..=16 {
        let cfg = PurifyConfig::new(n, 2, 0.8, DecoderKind::FourierConjugatePair)?;
        let sum: f64 = purify_blocks(&cfg)?.iter().map(|o| o.p_success).sum();
        explicit = explicit.max((sum - total(n, 0.8)).abs());
    }
    let gaps: Vec<f64> = (2..=64).map(|n| (total(n, 0.8) - 0.8).abs()).collect();
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0]);
    Ok((
        worst <= 1e-12 && explicit <= 1e-12 && monotone,
        format!(
            "max deviation {worst:.2e} (tol 1e-12); m=2 total success gap to p shrinks monotonically on n=2..64: {monotone}, final gap {:.4}",
            gaps[gaps.len() - 1]
        ),
    ))
}

fn codec_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut flat = true;
    for t in [2usize, 4, 8] {
        let (f, h) = (Codec::fourier(t)?, Codec::hadamard(t)?);
        for codec in [&f, &h] {
            let c = codec.path_products(0);
            flat &= c.iter().all(|x| (x.norm() - 1.0 / t as f64).abs() < 1e-12);
            flat &= codec.validate().faithful;
        }
        for a2 in [0.5, 0.8, 0.95] {
            let a = run_exact(&FiltrationConfig::uniform(f.clone(), a2)?)?;
            let b = run_exact(&FiltrationConfig::uniform(h.clone(), a2)?)?;
            for (x, y) in [
                (a.p_success, b.p_success),
                (a.p_success_no_error, b.p_success_no_error),
                (a.p_success_error, b.p_success_error),
                (a.conditional_fidelity, b.conditional_fidelity),
            ] {
                worst = worst.max((x - y).abs());
            }
        }
    }
    Ok((
        worst <= 1e-12 && flat,
        format!("max fourier/hadamard difference {worst:.2e} (tol 1e-12); equal-magnitude paths {flat}"),
    ))
}

fn collective() -> Outcome {
    let mut sigma: f64 = 0.0;
    let mut beats = true;
    for (i, a2) in [0.5, 0.8, 0.95].into_iter().enumerate() {
        let b2 = 1.0 - a2;
        let expect = (a2 + 4.0 * b2 / 9.0) / (a2 + 2.0 * b2 / 3.0);
        let trivial = 1.0 - b2 / 3.0;
        let est = bloch_average_monte_carlo(
            &FiltrationConfig::uniform(Codec::collective_fourier(2, 3)?, a2)?,
            &plan(i as u64),
        )?;
        sigma = sigma.max(within(est, expect));
        beats &= est.mean > trivial;
    }
    Ok((
        sigma <= 3.0 && beats,
        format!("worst deviation {sigma:.2} sigma (tol 3); beats trivial encoding {beats}"),
    ))
}

fn internal_dof() -> Outcome {
    let mut worst: f64 = 0.0;
    for t in [2, 4] {
        for a2 in [0.5, 0.8, 0.95] {
            let noise = ChannelNoise::Internal {
                spec: InternalNoiseSpec::pauli(a2)?,
                internal_state: vec![real(0.6), C64::new(0.0, 0.8)],
            };
            let out = run_exact(&FiltrationConfig::new(Codec::fourier(t)?, noise)?)?;
            worst = worst.max((out.p_success_error - (1.0 - a2) / t as f64).abs());
        }
    }
    Ok((worst <= 1e-12, format!("max deviation {worst:.2e} (tol 1e-12)")))
}

fn noise_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut sigma, mut exact): (f64, f64) = (0.0, 0.0);
    for (i, n) in [2usize, 3].into_iter().enumerate() {
        let psi = random_state(n, &mut rng);
        let alphas: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..1.0)).collect();
        let spec = PhaseNoiseSpec::from_alphas(&alphas)?;
        let dilated = dephased_density_dilated(&psi, &spec)?;
        for r in 0..n {
            for c in 0..n {
                let coh = if r == c { 1.0 } else { alphas[r] * alphas[c] };
                exact = exact.max((dilated.entry(r, c) - psi[r] * psi[c].conj() * coh).norm());
            }
        }
        let mc = dephased_density_monte_carlo(&psi, &spec, PhaseDistribution::default(), &plan(10 + i as u64))?;
        sigma = sigma.max(mc.max_sigma_deviation(dilated.matrix()));
    }
    Ok((
        sigma <= 3.0 && exact <= 1e-12,
        format!("worst entry {sigma:.2} sigma (tol 3); dilation vs coherence formula {exact:.2e}"),
    ))
}

fn coherent_classical() -> Outcome {
    let dist = PhaseDistribution::default();
    let a2: f64 = 0.8;
    let mut sigma: f64 = 0.0;
    for (i, phi) in [0.0, PI / 3.0, PI].into_iter().enumerate() {
        let (t, tf) = (4, 4.0);
        let cfg = CoherentConfig::new(real(1.0), phi, t, real(a2.sqrt()))?;
        let expect = 0.5 * (1.0 + (tf - 1.0) * a2) / tf * (1.0 + tf * a2 * phi.cos() / (1.0 + (tf - 1.0) * a2));
        sigma = sigma.max(within(
            coherent_current_monte_carlo(&cfg, &plan(20 + i as u64), dist),
            expect,
        ));
    }
    let cfg = CoherentConfig::new(real(1.0), 0.0, 4, real(a2.sqrt()))?;
    sigma = sigma.max(within(
        coherent_visibility_monte_carlo(&cfg, &plan(23), dist),
        4.0 * a2 / (1.0 + 3.0 * a2),
    ));

    let nf = NoiseFunction::linear_phase(a2.sqrt())?;
    let ratio = (1.0 - a2) / a2;
    let mut amps = Vec::new();
    for (i, t) in [1usize, 2, 4, 8].into_iter().enumerate() {
        let out = classical_outcome(real(1.0), t, &nf, &plan(30 + i as u64))?;
        let tf = t as f64;
        sigma = sigma.max(within(out.mean_intensity, a2 * (1.0 + ratio / tf)));
        sigma = sigma.max(within(out.visibility, 1.0 / (1.0 + ratio / tf)));
        amps.push((out.mean_amplitude.re, out.amplitude_stderr.0));
    }
    let drift = amps
        .iter()
        .map(|(m, s)| (m - amps[0].0).abs() / s.hypot(amps[0].1).max(1e-300))
        .fold(0.0, f64::max);

    let nl = NoiseFunction::nonlinear_phase(0.9, 0.1)?;
    let fit = nonlinear_scaling_fit(real(1.0), &[2, 4, 8, 16, 32], &nl, &plan(40))?;
    let fit_ok = (fit.linear_exponent - 1.0).abs() <= 0.2 && (fit.nonlinear_exponent - 3.0).abs() <= 0.2;
    Ok((
        sigma <= 3.0 && drift <= 3.0 && fit_ok,
        format!(
            "worst deviation {sigma:.2} sigma, mean amplitude drift over T {drift:.2} sigma (tol 3); exponents {:.3}, {:.3} (expect 1, 3 +- 0.2)",
            fit.linear_exponent, fit.nonlinear_exponent
        ),
    ))
}

fn protocols() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let p1 = |s: f64, r: f64, p: f64| (p * r / s + (1.0 - p) * r / (s * s)) / (p * r / s + (1.0 - p) * r * r / (s * s));
    let mut worst: f64 = 0.0;
    for s in 1..=8usize {
        for r in 1..=s {
            for p in [0.0, 0.3, 0.8, 1.0] {
                let rep = protocol1_explicit(&fourier_decoder_a(s), r, p)?;
                worst = worst.max((rep.fidelity - p1(s as f64, r as f64, p)).abs());
            }
            let rep = protocol1_explicit(&random_unitary(s, &mut rng), r, 0.6)?;
            if rep.fidelity > p1(s as f64, r as f64, 0.6) + 1e-12 {
                worst = f64::INFINITY;
            }
        }
    }
    let p2 = |a: &[C64], a2: f64, t: f64| {
        let q = a2 + (1.0 - a2) / t;
        let s4: f64 = a.iter().map(|x| x.norm_sqr().powi(2)).sum();
        (a2 * a2 + (q * q - a2 * a2) * s4) / (q * q)
    };
    for s in 1..=8 {
        let a = random_state(s, &mut rng);
        for t in 1..=8 {
            worst = worst.max((protocol2_explicit(&a, 0.7, t)? - p2(&a, 0.7, t as f64)).abs());
        }
    }
    let mut monotone = true;
    for p in [0.3, 0.8] {
        let f: Vec<f64> = (2..=64).map(|s| p1(s as f64, 2.0, p)).collect();
        monotone &= f.windows(2).all(|w| w[1] >= w[0]);
        monotone &= 1.0 - p1(1e9, 2.0, p) < 1e-6;
    }
    for s in 2..=8 {
        let a = random_state(s, &mut rng);
        let f: Vec<f64> = (1..=64).map(|t| p2(&a, 0.5, t as f64)).collect();
        monotone &= f.windows(2).all(|w| w[1] >= w[0]);
    }
    Ok((
        worst <= 1e-12 && monotone,
        format!("max deviation {worst:.2e} (tol 1e-12); monotone with limit 1: {monotone}"),
    ))
}

fn thresholds() -> Outcome {
    let probes = [
        (0.85, false, true),
        (0.85 + 1e-12, true, true),
        (0.85 - 1e-12, false, true),
        (0.5, false, false),
        (0.5 + 1e-12, false, true),
        (0.5 - 1e-12, false, false),
    ];
    let mut ok = true;
    for (f, bb84, werner) in probes {
        let r = threshold_report(f)?;
        ok &= r.bb84_secure == bb84 && r.werner_entangled == werner;
    }
    Ok((
        ok,
        format!("{} boundary probes at the 85% and 50% cutoffs", probes.len()),
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("success probability", success_probability),
        ("fringe visibility", visibility),
        ("non-uniform channels", nonuniform_channels),
        ("series modules", series),
        ("purification", purification),
        ("codec equivalence", codec_equivalence),
        ("collective encoding", collective),
        ("internal degrees of freedom", internal_dof),
        ("noise-description equivalence", noise_equivalence),
        ("coherent and classical waves", coherent_classical),
        ("two-party protocols", protocols),
        ("security thresholds", thresholds),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
        if !pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {detail} [{:.2}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
