// Copyright 2026 The errfilt Authors
// SPDX-License-Identifier: Apache-2.0

//! Filtration of coherent states and classical wave amplitudes.
//!
//! A source amplitude `A` is spread over `T` channels as `A/√T` each, every
//! channel multiplies its amplitude by an i.i.d. noise factor `N(ξ, A/√T)`,
//! and the Fourier decoder recombines them, so the useful receiver port sees
//! `A_R = (A/T) Σ_j N_j`.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::error::{invalid, Error, Result};
use crate::filtration::fitted_visibility;
use crate::hilbert::{phase, C64};
use crate::montecarlo::{log_log_slope, run_sharded, Estimate, McPlan, Moments};
use crate::noise::{sample_channel_factor, PhaseDistribution};

/// Number of relative phases in a fringe sweep.
pub const SWEEP_POINTS: usize = 16;

/// Small-noise expansion of the nonlinear fluctuation is trusted only when
/// `Var(φ)|A|⁴/T²` stays below this.
pub const EXPANSION_LIMIT: f64 = 0.01;

fn sweep_phases() -> Vec<f64> {
    (0..SWEEP_POINTS)
        .map(|k| TAU * k as f64 / SWEEP_POINTS as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentConfig {
    lambda: C64,
    phi: f64,
    t: usize,
    alpha: C64,
}

impl CoherentConfig {
    pub fn new(lambda: C64, phi: f64, t: usize, alpha: C64) -> Result<Self> {
        if t == 0 {
            return Err(invalid("T must be >= 1"));
        }
        if alpha.norm() > 1.0 + 1e-12 {
            return Err(invalid(format!("|alpha| = {} exceeds 1", alpha.norm())));
        }
        Ok(Self { lambda, phi, t, alpha })
    }

    pub fn lambda(&self) -> C64 {
        self.lambda
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn alpha(&self) -> C64 {
        self.alpha
    }

    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi = phi;
        self
    }
}

/// Mean photocurrent in the bright output port after interfering the two
/// filtered arms.
pub fn coherent_current(cfg: &CoherentConfig) -> f64 {
    let t = cfg.t as f64;
    let a2 = cfg.alpha.norm_sqr();
    let base = (1.0 + (t - 1.0) * a2) / t;
    cfg.lambda.norm_sqr() / 2.0 * base * (1.0 + t * a2 * cfg.phi.cos() / (1.0 + (t - 1.0) * a2))
}

/// `T|α|²/(1 + (T − 1)|α|²)`
pub fn coherent_visibility_analytic(t: usize, alpha2: f64) -> f64 {
    let t = t as f64;
    t * alpha2 / (1.0 + (t - 1.0) * alpha2)
}

/// Visibility fitted to the closed-form current over a phase sweep.
pub fn coherent_visibility_sweep(cfg: &CoherentConfig) -> f64 {
    let phis = sweep_phases();
    let currents: Vec<f64> = phis.iter().map(|&p| coherent_current(&cfg.with_phi(p))).collect();
    fitted_visibility(&phis, &currents)
}

fn coherent_sample(cfg: &CoherentConfig, dist: PhaseDistribution, rng: &mut ChaCha8Rng) -> (C64, C64) {
    let (mut z, mut zt) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for _ in 0..cfg.t {
        z += sample_channel_factor(cfg.alpha, dist, rng);
        zt += sample_channel_factor(cfg.alpha, dist, rng);
    }
    (z, zt)
}

/// Samples `(|λ|²/4T²)|Σ_j (e^{iB^j} + e^{iΦ} e^{iB̃^j})|²` with i.i.d. phases
/// of mean `α`.
pub fn coherent_current_monte_carlo(cfg: &CoherentConfig, plan: &McPlan, dist: PhaseDistribution) -> Estimate {
    let scale = cfg.lambda.norm_sqr() / (4.0 * (cfg.t * cfg.t) as f64);
    let rot = phase(cfg.phi);
    let m = run_sharded(
        plan,
        || Moments::new(1),
        |acc, rng| {
            let (z, zt) = coherent_sample(cfg, dist, rng);
            acc.push(&[scale * (z + rot * zt).norm_sqr()]);
        },
        |a, b| a.merge(b),
    );
    m.estimate(0)
}

/// Monte-Carlo fringe sweep of the coherent current.
pub fn coherent_visibility_monte_carlo(cfg: &CoherentConfig, plan: &McPlan, dist: PhaseDistribution) -> Estimate {
    let phis = sweep_phases();
    let rots: Vec<C64> = phis.iter().map(|&p| phase(p)).collect();
    let scale = cfg.lambda.norm_sqr() / (4.0 * (cfg.t * cfg.t) as f64);
    let m = run_sharded(
        plan,
        || Moments::new(SWEEP_POINTS),
        |acc, rng| {
            let (z, zt) = coherent_sample(cfg, dist, rng);
            let row: Vec<f64> = rots.iter().map(|r| scale * (z + r * zt).norm_sqr()).collect();
            acc.push(&row);
        },
        |a, b| a.merge(b),
    );
    m.delta_fn(|v| fitted_visibility(&phis, v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Deterministic,
    LinearPhase,
    LinearAmplitude,
    NonlinearPhase,
}

impl NoiseKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Deterministic => "deterministic",
            Self::LinearPhase => "linear-phase",
            Self::LinearAmplitude => "linear-amplitude",
            Self::NonlinearPhase => "nonlinear-phase",
        }
    }
}

/// Multiplicative channel noise `N(ξ, A_in)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseFunction {
    Deterministic(C64),
    /// `e^{iφ(ξ)}` with `E[e^{iφ}] = alpha`.
    LinearPhase {
        alpha: f64,
        distribution: PhaseDistribution,
    },
    /// Real log-normal factor `e^{σz}`, `z` standard normal.
    LinearAmplitude {
        sigma: f64,
    },
    /// `N₁ · e^{iφ|A_in|²}` with `N₁` linear phase noise of mean `alpha` and
    /// `φ ~ N(0, phi_std²)` independent of it.
    NonlinearPhase {
        alpha: f64,
        distribution: PhaseDistribution,
        phi_std: f64,
    },
}

impl NoiseFunction {
    pub fn linear_phase(alpha: f64) -> Result<Self> {
        check_unit(alpha)?;
        Ok(Self::LinearPhase {
            alpha,
            distribution: PhaseDistribution::default(),
        })
    }

    pub fn linear_amplitude(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(invalid(format!("amplitude noise sigma = {sigma} must be >= 0")));
        }
        Ok(Self::LinearAmplitude { sigma })
    }

    pub fn nonlinear_phase(alpha: f64, phi_std: f64) -> Result<Self> {
        check_unit(alpha)?;
        if !(phi_std.is_finite() && phi_std >= 0.0) {
            return Err(invalid(format!("phi_std = {phi_std} must be >= 0")));
        }
        Ok(Self::NonlinearPhase {
            alpha,
            distribution: PhaseDistribution::default(),
            phi_std,
        })
    }

    pub fn kind(&self) -> NoiseKind {
        match self {
            Self::Deterministic(_) => NoiseKind::Deterministic,
            Self::LinearPhase { .. } => NoiseKind::LinearPhase,
            Self::LinearAmplitude { .. } => NoiseKind::LinearAmplitude,
            Self::NonlinearPhase { .. } => NoiseKind::NonlinearPhase,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, input: C64, rng: &mut R) -> C64 {
        match *self {
            Self::Deterministic(n) => n,
            Self::LinearPhase { alpha, distribution } => sample_channel_factor(C64::new(alpha, 0.0), distribution, rng),
            Self::LinearAmplitude { sigma } => {
                let f: f64 = LogNormal::new(0.0, sigma).expect("sigma >= 0").sample(rng);
                C64::new(f, 0.0)
            }
            Self::NonlinearPhase {
                alpha,
                distribution,
                phi_std,
            } => {
                let n1 = sample_channel_factor(C64::new(alpha, 0.0), distribution, rng);
                n1 * phase(draw_phi(phi_std, rng) * input.norm_sqr())
            }
        }
    }

    /// Exact `(N̄, ⟨|N|²⟩)` at channel input amplitude `input`.
    pub fn moments(&self, input: C64) -> (C64, f64) {
        match *self {
            Self::Deterministic(n) => (n, n.norm_sqr()),
            Self::LinearPhase { alpha, .. } => (C64::new(alpha, 0.0), 1.0),
            Self::LinearAmplitude { sigma } => {
                let s2 = sigma * sigma;
                (C64::new((s2 / 2.0).exp(), 0.0), (2.0 * s2).exp())
            }
            Self::NonlinearPhase { alpha, phi_std, .. } => {
                let s = phi_std * input.norm_sqr();
                (C64::new(alpha * (-s * s / 2.0).exp(), 0.0), 1.0)
            }
        }
    }

    /// `(⟨|N|²⟩ − |N̄|²)/|N̄|²`
    pub fn excess_ratio(&self, input: C64) -> Result<f64> {
        let (mean, sq) = self.moments(input);
        let m2 = mean.norm_sqr();
        if m2 == 0.0 {
            return Err(Error::NumericalCheck("noise has zero mean".into()));
        }
        Ok((sq - m2) / m2)
    }
}

fn check_unit(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("noise mean {alpha} outside [0, 1]")));
    }
    Ok(())
}

fn draw_phi<R: Rng + ?Sized>(std: f64, rng: &mut R) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        Normal::new(0.0, std).expect("std > 0").sample(rng)
    }
}

fn channel_input(a: C64, t: usize) -> C64 {
    a / (t as f64).sqrt()
}

/// `Ā_R = A · N̄(A/√T)`
pub fn mean_amplitude_analytic(a: C64, t: usize, nf: &NoiseFunction) -> C64 {
    a * nf.moments(channel_input(a, t)).0
}

/// `|Ā_R|² (1 + ratio/T)`
pub fn mean_intensity_analytic(a: C64, t: usize, nf: &NoiseFunction) -> Result<f64> {
    let ratio = nf.excess_ratio(channel_input(a, t))?;
    Ok(mean_amplitude_analytic(a, t, nf).norm_sqr() * (1.0 + ratio / t as f64))
}

/// `|Ā_R|² ratio/T`
pub fn fluctuation_analytic(a: C64, t: usize, nf: &NoiseFunction) -> Result<f64> {
    let ratio = nf.excess_ratio(channel_input(a, t))?;
    Ok(mean_amplitude_analytic(a, t, nf).norm_sqr() * ratio / t as f64)
}

/// `1/(1 + ratio/T)` for two signals of amplitude `A/√2` each.
pub fn visibility_analytic(a: C64, t: usize, nf: &NoiseFunction) -> Result<f64> {
    let input = channel_input(a / 2f64.sqrt(), t);
    Ok(1.0 / (1.0 + nf.excess_ratio(input)? / t as f64))
}

/// Intensity expected in each non-useful port: `|A|²(⟨|N|²⟩ − |N̄|²)/T`.
pub fn nonuseful_intensity_analytic(a: C64, t: usize, nf: &NoiseFunction) -> f64 {
    let (mean, sq) = nf.moments(channel_input(a, t));
    a.norm_sqr() * (sq - mean.norm_sqr()) / t as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalOutcome {
    pub mean_amplitude: C64,
    /// Standard errors of the real and imaginary parts.
    pub amplitude_stderr: (f64, f64),
    pub mean_intensity: Estimate,
    /// `mean_intensity − |mean_amplitude|²` on the same samples.
    pub fluctuation: Estimate,
    pub visibility: Estimate,
}

fn check_channels(nfs: &[NoiseFunction]) -> Result<()> {
    if nfs.is_empty() {
        return Err(invalid("need at least one transmission channel"));
    }
    Ok(())
}

/// `(A/T) Σ_j N_j` with channel `j` drawing from `nfs[j]`.
fn useful_amplitude(a: C64, nfs: &[NoiseFunction], rng: &mut ChaCha8Rng) -> C64 {
    let t = nfs.len();
    let input = channel_input(a, t);
    let sum: C64 = nfs.iter().map(|nf| nf.sample(input, rng)).sum();
    a * sum / t as f64
}

/// Monte-Carlo statistics of the useful receiver port for identical channels.
pub fn classical_outcome(a: C64, t: usize, nf: &NoiseFunction, plan: &McPlan) -> Result<ClassicalOutcome> {
    if t == 0 {
        return Err(invalid("T must be >= 1"));
    }
    classical_outcome_heterogeneous(a, &vec![*nf; t], plan)
}

/// As [`classical_outcome`] with one noise function per channel.
pub fn classical_outcome_heterogeneous(a: C64, nfs: &[NoiseFunction], plan: &McPlan) -> Result<ClassicalOutcome> {
    check_channels(nfs)?;
    let phis = sweep_phases();
    let rots: Vec<C64> = phis.iter().map(|&p| phase(p)).collect();
    let half = a / 2f64.sqrt();
    let m = run_sharded(
        plan,
        || Moments::new(3 + SWEEP_POINTS),
        |acc, rng| {
            let ar = useful_amplitude(a, nfs, rng);
            let r1 = useful_amplitude(half, nfs, rng);
            let r2 = useful_amplitude(half, nfs, rng);
            let mut row = Vec::with_capacity(3 + SWEEP_POINTS);
            row.extend([ar.re, ar.im, ar.norm_sqr()]);
            row.extend(rots.iter().map(|r| (r1 + r * r2).norm_sqr() / 2.0));
            acc.push(&row);
        },
        |x, y| x.merge(y),
    );
    let (re, im, int) = (m.estimate(0), m.estimate(1), m.estimate(2));
    Ok(ClassicalOutcome {
        mean_amplitude: C64::new(re.mean, im.mean),
        amplitude_stderr: (re.stderr, im.stderr),
        mean_intensity: int,
        fluctuation: m.delta_fn(|v| v[2] - v[0] * v[0] - v[1] * v[1]),
        visibility: m.delta_fn(|v| fitted_visibility(&phis, &v[3..])),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortStats {
    pub port: usize,
    pub mean_amplitude: C64,
    pub amplitude_stderr: (f64, f64),
    pub mean_intensity: Estimate,
}

/// Statistics of the ports `k = 1..T` that carry `Σ_j (A_out^j/√T) e^{2πijk/T}`.
pub fn nonuseful_port_stats(a: C64, t: usize, nf: &NoiseFunction, plan: &McPlan) -> Result<Vec<PortStats>> {
    if t < 2 {
        return Err(invalid("non-useful ports need T >= 2"));
    }
    let input = channel_input(a, t);
    let ports = t - 1;
    let m = run_sharded(
        plan,
        || Moments::new(3 * ports),
        |acc, rng| {
            let outs: Vec<C64> = (0..t).map(|_| input * nf.sample(input, rng)).collect();
            let mut row = Vec::with_capacity(3 * ports);
            for k in 1..t {
                let amp: C64 = outs
                    .iter()
                    .enumerate()
                    .map(|(j, o)| o * phase(TAU * (j * k % t) as f64 / t as f64))
                    .sum::<C64>()
                    / (t as f64).sqrt();
                row.extend([amp.re, amp.im, amp.norm_sqr()]);
            }
            acc.push(&row);
        },
        |x, y| x.merge(y),
    );
    Ok((0..ports)
        .map(|i| {
            let (re, im) = (m.estimate(3 * i), m.estimate(3 * i + 1));
            PortStats {
                port: i + 1,
                mean_amplitude: C64::new(re.mean, im.mean),
                amplitude_stderr: (re.stderr, im.stderr),
                mean_intensity: m.estimate(3 * i + 2),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionReport {
    /// `(1/T)(⟨|N₁|²⟩/|N̄₁|² − 1)`
    pub linear_term: Estimate,
    /// `(1/T)(⟨|N₁|²⟩/|N̄₁|²)(1/|N̄₂|² − 1)`
    pub nonlinear_term: Estimate,
    pub predicted_linear: f64,
    pub predicted_nonlinear: f64,
    /// Leading small-noise term `Var(φ)|A|⁴/(T³|N̄₁|²)`.
    pub leading_order: f64,
    /// `Var(φ)|A|⁴/T² ≤ EXPANSION_LIMIT`
    pub expansion_valid: bool,
}

/// Splits the fluctuation ratio of nonlinear phase noise into its linear and
/// nonlinear parts, estimating the moments of `N₁` and `N₂` separately.
pub fn nonlinear_fluctuation_expansion(a: C64, t: usize, nf: &NoiseFunction, plan: &McPlan) -> Result<ExpansionReport> {
    let NoiseFunction::NonlinearPhase {
        alpha,
        distribution,
        phi_std,
    } = *nf
    else {
        return Err(invalid("expansion needs nonlinear-phase noise"));
    };
    if t == 0 {
        return Err(invalid("T must be >= 1"));
    }
    let tf = t as f64;
    let s = channel_input(a, t).norm_sqr();
    let m = run_sharded(
        plan,
        || Moments::new(5),
        |acc, rng| {
            let n1 = sample_channel_factor(C64::new(alpha, 0.0), distribution, rng);
            let n2 = phase(draw_phi(phi_std, rng) * s);
            acc.push(&[n1.re, n1.im, n1.norm_sqr(), n2.re, n2.im]);
        },
        |x, y| x.merge(y),
    );
    let ratio1 = |v: &[f64]| v[2] / (v[0] * v[0] + v[1] * v[1]);
    let linear_term = m.delta_fn(|v| (ratio1(v) - 1.0) / tf);
    let nonlinear_term = m.delta_fn(|v| ratio1(v) * (1.0 / (v[3] * v[3] + v[4] * v[4]) - 1.0) / tf);
    let var = phi_std * phi_std;
    let a4 = a.norm_sqr().powi(2);
    let a2 = alpha * alpha;
    Ok(ExpansionReport {
        linear_term,
        nonlinear_term,
        predicted_linear: (1.0 / a2 - 1.0) / tf,
        predicted_nonlinear: ((var * s * s).exp() - 1.0) / (a2 * tf),
        leading_order: var * a4 / (tf.powi(3) * a2),
        expansion_valid: var * a4 / (tf * tf) <= EXPANSION_LIMIT,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    /// Decay exponent of the linear term, expected near 1.
    pub linear_exponent: f64,
    /// Decay exponent of the nonlinear term, expected near 3.
    pub nonlinear_exponent: f64,
}

/// Fits `term ∝ T^{−k}` on a log grid of `ts` for both contributions.
pub fn nonlinear_scaling_fit(a: C64, ts: &[usize], nf: &NoiseFunction, plan: &McPlan) -> Result<ScalingFit> {
    if ts.len() < 2 {
        return Err(invalid("scaling fit needs at least two values of T"));
    }
    let mut lin = Vec::with_capacity(ts.len());
    let mut non = Vec::with_capacity(ts.len());
    for &t in ts {
        let r = nonlinear_fluctuation_expansion(a, t, nf, plan)?;
        if !r.expansion_valid {
            return Err(Error::NumericalCheck(format!(
                "small-noise expansion not valid at T = {t}"
            )));
        }
        lin.push(r.linear_term.mean);
        non.push(r.nonlinear_term.mean);
    }
    if lin.iter().chain(&non).any(|v| *v <= 0.0) {
        return Err(Error::NumericalCheck("non-positive term in scaling fit".into()));
    }
    let x: Vec<f64> = ts.iter().map(|&t| t as f64).collect();
    Ok(ScalingFit {
        linear_exponent: -log_log_slope(&x, &lin),
        nonlinear_exponent: -log_log_slope(&x, &non),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationReport {
    pub t: usize,
    pub degree: usize,
    /// `E|(Z + Z̃)/2|^{2N}` with `Z = (1/T)Σ_j e^{iB^j}`.
    pub attenuation: Estimate,
    /// `|α|^{2N}`
    pub expected_attenuation: f64,
    /// `max_Φ |M(Φ)/M(0) − cos^{2N}(Φ/2)|` over the sweep.
    pub shape_deviation: f64,
}

/// Degree-`N` interference pattern of two filtered creation operators.
pub fn large_t_attenuation(
    degree: usize,
    t: usize,
    alpha: f64,
    plan: &McPlan,
    dist: PhaseDistribution,
) -> Result<AttenuationReport> {
    if degree == 0 || t == 0 {
        return Err(invalid("degree and T must be >= 1"));
    }
    check_unit(alpha)?;
    let cfg = CoherentConfig::new(C64::new(1.0, 0.0), 0.0, t, C64::new(alpha, 0.0))?;
    let phis = sweep_phases();
    let rots: Vec<C64> = phis.iter().map(|&p| phase(p)).collect();
    let m = run_sharded(
        plan,
        || Moments::new(SWEEP_POINTS),
        |acc, rng| {
            let (z, zt) = coherent_sample(&cfg, dist, rng);
            let scale = 1.0 / (2 * t) as f64;
            let row: Vec<f64> = rots
                .iter()
                .map(|r| ((z + r * zt) * scale).norm_sqr().powi(degree as i32))
                .collect();
            acc.push(&row);
        },
        |x, y| x.merge(y),
    );
    let mean = m.mean();
    let shape_deviation = phis
        .iter()
        .zip(&mean)
        .map(|(p, v)| (v / mean[0] - (p / 2.0).cos().powi(2 * degree as i32)).abs())
        .fold(0.0, f64::max);
    Ok(AttenuationReport {
        t,
        degree,
        attenuation: m.estimate(0),
        expected_attenuation: alpha.powi(2 * degree as i32),
        shape_deviation,
    })
}
