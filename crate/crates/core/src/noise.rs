// Copyright 2026 The errfilt Authors
// SPDX-License-Identifier: Apache-2.0

//! Channel noise, in two equivalent forms: a unitary dilation onto a finite
//! environment register, and i.i.d. random phases.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::hilbert::{c64, real, DenseOperator, DensityMatrix, LabeledState, C64, DEFAULT_DIM_CAP, TOL};
use crate::montecarlo::{run_sharded, McPlan, Moments};
use nalgebra::DMatrix;

/// Per-channel dephasing amplitudes: `|j⟩|0⟩ ↦ |j⟩(α_j|0⟩ + β_j|j⟩)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseNoiseSpec {
    channels: Vec<(C64, C64)>,
}

impl PhaseNoiseSpec {
    pub fn new(channels: Vec<(C64, C64)>) -> Result<Self> {
        if channels.is_empty() {
            return Err(invalid("phase noise needs at least one channel"));
        }
        for (j, (a, b)) in channels.iter().enumerate() {
            let n = a.norm_sqr() + b.norm_sqr();
            if (n - 1.0).abs() > TOL {
                return Err(invalid(format!("channel {j}: |alpha|^2 + |beta|^2 = {n}, expected 1")));
            }
        }
        Ok(Self { channels })
    }

    /// Identical channels with real amplitudes `α = sqrt(alpha2)`,
    /// `β = sqrt(1 − alpha2)`.
    pub fn uniform(t: usize, alpha2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha2) {
            return Err(invalid(format!("alpha2 = {alpha2} outside [0, 1]")));
        }
        let pair = (real(alpha2.sqrt()), real((1.0 - alpha2).sqrt()));
        Self::new(vec![pair; t])
    }

    /// Real amplitudes `α_j ∈ [0, 1]`, with `β_j = sqrt(1 − α_j²)`.
    pub fn from_alphas(alphas: &[f64]) -> Result<Self> {
        let mut channels = Vec::with_capacity(alphas.len());
        for &a in alphas {
            if !(0.0..=1.0).contains(&a) {
                return Err(invalid(format!("alpha = {a} outside [0, 1]")));
            }
            channels.push((real(a), real((1.0 - a * a).max(0.0).sqrt())));
        }
        Self::new(channels)
    }

    pub fn channels(&self) -> &[(C64, C64)] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn alpha(&self, j: usize) -> C64 {
        self.channels[j].0
    }

    pub fn beta(&self, j: usize) -> C64 {
        self.channels[j].1
    }

    /// `ᾱ = (1/T) Σ α_j`
    pub fn alpha_mean(&self) -> C64 {
        self.channels.iter().map(|(a, _)| a).sum::<C64>() / self.channels.len() as f64
    }

    pub fn is_uniform(&self) -> bool {
        let (a0, b0) = self.channels[0];
        self.channels
            .iter()
            .all(|(a, b)| (a - a0).norm() <= TOL && (b.norm() - b0.norm()).abs() <= TOL)
    }

    /// Rotates each channel by a fixed phase shift so that every `α_j` is
    /// real and non-negative.
    pub fn phase_aligned(&self) -> Self {
        let channels = self
            .channels
            .iter()
            .map(|&(a, b)| {
                if a.norm() == 0.0 {
                    (real(0.0), b)
                } else {
                    let rot = a.conj() / a.norm();
                    (real(a.norm()), b * rot)
                }
            })
            .collect();
        Self { channels }
    }

    /// Concatenation of channel lists (noise on a direct sum of channels).
    pub fn concat(&self, other: &Self) -> Self {
        let mut channels = self.channels.clone();
        channels.extend_from_slice(&other.channels);
        Self { channels }
    }
}

fn fresh_register(state: &LabeledState, segment: usize, dim: usize) -> Result<usize> {
    let env = state.env_factor(segment)?;
    if state.is_consumed(segment)? {
        return Err(Error::RegisterConsumed(segment));
    }
    if state.factors()[env].dim != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: state.factors()[env].dim,
        });
    }
    Ok(env)
}

/// Applies dephasing to the channel index held in `channel_factor`, writing
/// the error record into the register of `segment` (dimension `T + 1`).
pub fn apply_phase_noise(
    state: &LabeledState,
    spec: &PhaseNoiseSpec,
    channel_factor: usize,
    segment: usize,
) -> Result<LabeledState> {
    let t = spec.len();
    let factor = state
        .factors()
        .get(channel_factor)
        .ok_or(Error::NotSystemFactor(channel_factor))?;
    if factor.is_env() {
        return Err(Error::NotSystemFactor(channel_factor));
    }
    if factor.dim != t {
        return Err(Error::DimensionMismatch {
            expected: factor.dim,
            got: t,
        });
    }
    let env = fresh_register(state, segment, t + 1)?;
    let strides = state.strides();
    let (cs, es) = (strides[channel_factor], strides[env]);

    let mut out = state.clone();
    {
        let amps = out.amps_mut();
        for flat in 0..amps.len() {
            if (flat / es) % (t + 1) != 0 {
                continue;
            }
            let a = amps[flat];
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            let j = (flat / cs) % t;
            let (alpha, beta) = spec.channels[j];
            amps[flat] = alpha * a;
            amps[flat + (j + 1) * es] = beta * a;
        }
    }
    out.mark_consumed(env);
    Ok(out)
}

/// Internal degree-of-freedom noise:
/// `|jμ⟩|0⟩ ↦ α|jμ⟩|0⟩ + Σ_{νλ} β_λ (E_λ)_{μν} |jν⟩|jλ⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalNoiseSpec {
    internal_dim: usize,
    alpha: C64,
    errors: Vec<(C64, DenseOperator)>,
}

impl InternalNoiseSpec {
    /// Accepted only if the single-channel dilation is an isometry.
    pub fn new(internal_dim: usize, alpha: C64, errors: Vec<(C64, DenseOperator)>) -> Result<Self> {
        if internal_dim == 0 {
            return Err(invalid("internal dimension must be at least 1"));
        }
        for (_, e) in &errors {
            if e.rows() != internal_dim || e.cols() != internal_dim {
                return Err(Error::DimensionMismatch {
                    expected: internal_dim,
                    got: e.rows().max(e.cols()),
                });
            }
        }
        let spec = Self {
            internal_dim,
            alpha,
            errors,
        };
        let dev = spec.dilation().isometry_deviation();
        if dev > TOL {
            return Err(Error::NotIsometric(dev));
        }
        Ok(spec)
    }

    /// The three Pauli errors with equal weights `β_λ = sqrt((1 − |α|²)/3)`.
    pub fn pauli(alpha2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha2) {
            return Err(invalid(format!("alpha2 = {alpha2} outside [0, 1]")));
        }
        let b = real(((1.0 - alpha2) / 3.0).sqrt());
        Self::new(
            2,
            real(alpha2.sqrt()),
            vec![(b, pauli_x()), (b, pauli_y()), (b, pauli_z())],
        )
    }

    pub fn internal_dim(&self) -> usize {
        self.internal_dim
    }

    pub fn alpha(&self) -> C64 {
        self.alpha
    }

    pub fn errors(&self) -> &[(C64, DenseOperator)] {
        &self.errors
    }

    pub fn error_count(&self) -> usize {
        self.errors.len()
    }

    /// Environment register dimension for `t` channels: `1 + t·L`.
    pub fn register_dim(&self, t: usize) -> usize {
        1 + t * self.errors.len()
    }

    /// Single-channel map from `I` internal states to `I ⊗ (1 + L)` with
    /// the environment index fastest.
    pub fn dilation(&self) -> DenseOperator {
        let i = self.internal_dim;
        let l = self.errors.len();
        let mut m = DenseOperator::zeros(i * (l + 1), i).into_matrix();
        for mu in 0..i {
            m[(mu * (l + 1), mu)] = self.alpha;
            for (lam, (beta, e)) in self.errors.iter().enumerate() {
                for nu in 0..i {
                    m[(nu * (l + 1) + 1 + lam, mu)] += beta * e.entry(mu, nu);
                }
            }
        }
        DenseOperator::new(m)
    }

    /// `Σ_λ |β_λ|² Σ_ν |(E_λ)_{μν}|²`, the error probability of internal state `μ`.
    pub fn error_probability(&self, mu: usize) -> f64 {
        self.errors
            .iter()
            .map(|(b, e)| b.norm_sqr() * (0..self.internal_dim).map(|nu| e.entry(mu, nu).norm_sqr()).sum::<f64>())
            .sum()
    }
}

pub fn pauli_x() -> DenseOperator {
    DenseOperator::from_fn(2, 2, |r, c| if r != c { real(1.0) } else { real(0.0) })
}

pub fn pauli_y() -> DenseOperator {
    DenseOperator::from_fn(2, 2, |r, c| match (r, c) {
        (0, 1) => c64(0.0, -1.0),
        (1, 0) => c64(0.0, 1.0),
        _ => real(0.0),
    })
}

pub fn pauli_z() -> DenseOperator {
    DenseOperator::diagonal(&[real(1.0), real(-1.0)])
}

/// Applies internal noise; the channel index lives in `channel_factor` and the
/// internal state in `internal_factor`. Error `λ` on channel `j` is recorded as
/// register outcome `1 + j·L + λ`.
pub fn apply_internal_noise(
    state: &LabeledState,
    spec: &InternalNoiseSpec,
    channel_factor: usize,
    internal_factor: usize,
    segment: usize,
) -> Result<LabeledState> {
    let factors = state.factors();
    for &f in &[channel_factor, internal_factor] {
        if factors.get(f).is_none_or(|x| x.is_env()) {
            return Err(Error::NotSystemFactor(f));
        }
    }
    if channel_factor == internal_factor {
        return Err(invalid("channel and internal factors must differ"));
    }
    let t = factors[channel_factor].dim;
    let idim = spec.internal_dim;
    if factors[internal_factor].dim != idim {
        return Err(Error::DimensionMismatch {
            expected: factors[internal_factor].dim,
            got: idim,
        });
    }
    let l = spec.errors.len();
    let env = fresh_register(state, segment, spec.register_dim(t))?;
    let strides = state.strides();
    let (cs, is, es) = (strides[channel_factor], strides[internal_factor], strides[env]);
    let edim = spec.register_dim(t);

    let src = state.amplitudes();
    let mut out = state.clone();
    {
        let amps = out.amps_mut();
        amps.iter_mut().for_each(|a| *a = C64::new(0.0, 0.0));
        for (flat, &a) in src.iter().enumerate() {
            if a == C64::new(0.0, 0.0) || (flat / es) % edim != 0 {
                continue;
            }
            let j = (flat / cs) % t;
            let mu = (flat / is) % idim;
            let base = flat - mu * is;
            amps[flat] += spec.alpha * a;
            for (lam, (beta, e)) in spec.errors.iter().enumerate() {
                let outcome = 1 + j * l + lam;
                for nu in 0..idim {
                    let coeff = beta * e.entry(mu, nu);
                    amps[base + nu * is + outcome * es] += coeff * a;
                }
            }
        }
    }
    out.mark_consumed(env);
    Ok(out)
}

/// How a random phase with `E[e^{iφ}] = target_mean` is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseDistribution {
    /// `φ = 0` with probability `target_mean`, uniform on `[0, 2π)` otherwise.
    #[default]
    PointMassMixture,
    /// Wrapped normal with `σ² = −2 ln(target_mean)`.
    WrappedGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomPhaseSpec {
    target_mean: f64,
    distribution: PhaseDistribution,
}

impl RandomPhaseSpec {
    pub fn new(target_mean: f64, distribution: PhaseDistribution) -> Result<Self> {
        if !(0.0..=1.0).contains(&target_mean) {
            return Err(invalid(format!("target mean {target_mean} outside [0, 1]")));
        }
        Ok(Self {
            target_mean,
            distribution,
        })
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn distribution(&self) -> PhaseDistribution {
        self.distribution
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let m = self.target_mean;
        if m >= 1.0 {
            return 0.0;
        }
        match self.distribution {
            PhaseDistribution::PointMassMixture => {
                if rng.random::<f64>() < m {
                    0.0
                } else {
                    rng.random::<f64>() * TAU
                }
            }
            PhaseDistribution::WrappedGaussian => {
                if m <= 0.0 {
                    return rng.random::<f64>() * TAU;
                }
                let sigma = (-2.0 * m.ln()).sqrt();
                let phi = Normal::new(0.0, sigma)
                    .expect("sigma is finite and positive")
                    .sample(rng);
                phi.rem_euclid(TAU)
            }
        }
    }
}

/// `t` i.i.d. phases drawn from `spec`.
pub fn sample_phases<R: Rng + ?Sized>(spec: &RandomPhaseSpec, t: usize, rng: &mut R) -> Vec<f64> {
    (0..t).map(|_| spec.sample(rng)).collect()
}

pub fn sample_phases_seeded(spec: &RandomPhaseSpec, t: usize, seed: u64) -> Vec<f64> {
    sample_phases(spec, t, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Draws the multiplicative noise `e^{iφ}` for channel `(α, _)`, reproducing
/// `E[e^{iφ}] = α` for complex `α`.
pub fn sample_channel_factor<R: Rng + ?Sized>(alpha: C64, distribution: PhaseDistribution, rng: &mut R) -> C64 {
    let spec = RandomPhaseSpec {
        target_mean: alpha.norm().min(1.0),
        distribution,
    };
    let offset = if alpha.norm() > 0.0 { alpha.arg() } else { 0.0 };
    C64::from_polar(1.0, spec.sample(rng) + offset)
}

/// `E[|ψ_θ⟩⟨ψ_θ|]` with `(ψ_θ)_j = e^{iθ_j}ψ_j`, estimated entrywise.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledDensity {
    pub mean: DMatrix<C64>,
    pub stderr_re: DMatrix<f64>,
    pub stderr_im: DMatrix<f64>,
}

impl SampledDensity {
    /// Largest entrywise deviation from `rho` in units of standard error,
    /// with entries of zero spread compared at a `1e-12` floor.
    pub fn max_sigma_deviation(&self, rho: &DMatrix<C64>) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, (m, r)) in self.mean.iter().zip(rho.iter()).enumerate() {
            let d = m - r;
            for (dev, se) in [(d.re, self.stderr_re[i]), (d.im, self.stderr_im[i])] {
                let z = if se > 0.0 {
                    dev.abs() / se
                } else if dev.abs() <= 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                };
                worst = worst.max(z);
            }
        }
        worst
    }
}

/// Random-phase description of the channel noise: every channel `j` of
/// `psi` picks up an independent phase with mean `α_j`.
pub fn dephased_density_monte_carlo(
    psi: &[C64],
    spec: &PhaseNoiseSpec,
    distribution: PhaseDistribution,
    plan: &McPlan,
) -> Result<SampledDensity> {
    let n = psi.len();
    if spec.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: spec.len(),
        });
    }
    let m = run_sharded(
        plan,
        || Moments::new(2 * n * n),
        |acc, rng| {
            let v: Vec<C64> = psi
                .iter()
                .enumerate()
                .map(|(j, a)| a * sample_channel_factor(spec.alpha(j), distribution, rng))
                .collect();
            let mut row = Vec::with_capacity(2 * n * n);
            for c in 0..n {
                for r in 0..n {
                    let z = v[r] * v[c].conj();
                    row.push(z.re);
                    row.push(z.im);
                }
            }
            acc.push(&row);
        },
        |a, b| a.merge(b),
    );
    let est = |k: usize| m.estimate(k);
    Ok(SampledDensity {
        mean: DMatrix::from_fn(n, n, |r, c| {
            let k = 2 * (c * n + r);
            c64(est(k).mean, est(k + 1).mean)
        }),
        stderr_re: DMatrix::from_fn(n, n, |r, c| est(2 * (c * n + r)).stderr),
        stderr_im: DMatrix::from_fn(n, n, |r, c| est(2 * (c * n + r) + 1).stderr),
    })
}

/// Dilation description: couple `psi` to a register and trace it out.
pub fn dephased_density_dilated(psi: &[C64], spec: &PhaseNoiseSpec) -> Result<DensityMatrix> {
    let st = LabeledState::from_system_amplitudes(psi).with_env(0, spec.len() + 1, DEFAULT_DIM_CAP)?;
    apply_phase_noise(&st, spec, 0, 0)?.partial_trace_env()
}

/// Fiber model with `|α|² = e^{−γL}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthModel {
    gamma: f64,
    length: f64,
}

impl LengthModel {
    pub fn new(gamma: f64, length: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("gamma = {gamma} must be finite and >= 0")));
        }
        if !(length >= 0.0 && length.is_finite()) {
            return Err(invalid(format!("length = {length} must be finite and >= 0")));
        }
        Ok(Self { gamma, length })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// `γL`
    pub fn loss(&self) -> f64 {
        self.gamma * self.length
    }
}

/// `α = e^{−γL/2}`
pub fn alpha_from_length(model: &LengthModel) -> C64 {
    real((-model.loss() / 2.0).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{Factor, DEFAULT_DIM_CAP};
    use approx::assert_abs_diff_eq;

    fn two_channel_plus() -> LabeledState {
        let h = real(0.5f64.sqrt());
        LabeledState::from_system_amplitudes(&[h, h])
            .with_env(0, 3, DEFAULT_DIM_CAP)
            .unwrap()
    }

    #[test]
    fn noiseless_spec_leaves_state_unchanged() {
        let s = two_channel_plus();
        let out = apply_phase_noise(&s, &PhaseNoiseSpec::uniform(2, 1.0).unwrap(), 0, 0).unwrap();
        assert_eq!(out.amplitudes(), s.amplitudes());
    }

    #[test]
    fn full_dephasing_correlates_environment() {
        let s = LabeledState::from_system_amplitudes(&[real(1.0)])
            .with_env(0, 2, DEFAULT_DIM_CAP)
            .unwrap();
        let out = apply_phase_noise(&s, &PhaseNoiseSpec::uniform(1, 0.0).unwrap(), 0, 0).unwrap();
        assert_eq!(out.amplitudes(), &[real(0.0), real(1.0)]);
    }

    #[test]
    fn uniform_dephasing_off_diagonal() {
        let out = apply_phase_noise(&two_channel_plus(), &PhaseNoiseSpec::uniform(2, 0.9).unwrap(), 0, 0).unwrap();
        let rho = out.partial_trace_env().unwrap();
        // ⟨env_1|env_2⟩ = |α|² between distinct channels, times 1/2.
        assert_abs_diff_eq!(rho.entry(0, 1).re, 0.45, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.entry(0, 0).re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(out.norm_sqr(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn register_cannot_be_reused() {
        let spec = PhaseNoiseSpec::uniform(2, 0.9).unwrap();
        let once = apply_phase_noise(&two_channel_plus(), &spec, 0, 0).unwrap();
        assert_eq!(
            apply_phase_noise(&once, &spec, 0, 0).unwrap_err(),
            Error::RegisterConsumed(0)
        );
        assert_eq!(
            apply_phase_noise(&once, &spec, 0, 7).unwrap_err(),
            Error::UnknownRegister(7)
        );
    }

    #[test]
    fn spec_rejects_unnormalized_pairs() {
        assert!(PhaseNoiseSpec::new(vec![(real(0.9), real(0.9))]).is_err());
        assert!(PhaseNoiseSpec::uniform(2, 1.5).is_err());
    }

    #[test]
    fn phase_alignment_makes_alpha_real() {
        let a = C64::from_polar(0.8, 1.1);
        let b = C64::from_polar(0.6, -0.4);
        let spec = PhaseNoiseSpec::new(vec![(a, b)]).unwrap().phase_aligned();
        assert_abs_diff_eq!(spec.alpha(0).im, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(spec.alpha(0).re, 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(spec.beta(0).norm(), 0.6, epsilon = 1e-15);
    }

    #[test]
    fn pauli_set_is_isometric_with_expected_error_probability() {
        let spec = InternalNoiseSpec::pauli(0.9).unwrap();
        for mu in 0..2 {
            assert_abs_diff_eq!(spec.error_probability(mu), 0.1, epsilon = 1e-15);
        }
    }

    #[test]
    fn internal_spec_rejects_non_isometric_set() {
        let b = real(0.5);
        let err = InternalNoiseSpec::new(2, real(0.9f64.sqrt()), vec![(b, pauli_x()), (b, pauli_z())]);
        assert!(matches!(err, Err(Error::NotIsometric(_))));
    }

    #[test]
    fn pauli_z_dephases_internal_state() {
        let alpha2: f64 = 0.7;
        let spec =
            InternalNoiseSpec::new(2, real(alpha2.sqrt()), vec![(real((1.0 - alpha2).sqrt()), pauli_z())]).unwrap();
        let h = real(0.5f64.sqrt());
        let s = LabeledState::new(vec![Factor::system(1), Factor::system(2)], vec![h, h])
            .unwrap()
            .with_env(0, spec.register_dim(1), DEFAULT_DIM_CAP)
            .unwrap();
        let rho = apply_internal_noise(&s, &spec, 0, 1, 0)
            .unwrap()
            .partial_trace_env()
            .unwrap();
        assert_abs_diff_eq!(rho.entry(0, 0).re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.entry(0, 1).re, 0.5 * (2.0 * alpha2 - 1.0), epsilon = 1e-15);
    }

    #[test]
    fn unfiltered_pauli_error_probability() {
        let spec = InternalNoiseSpec::pauli(0.8).unwrap();
        let s = LabeledState::new(
            vec![Factor::system(1), Factor::system(2)],
            vec![real(0.6), c64(0.0, 0.8)],
        )
        .unwrap()
        .with_env(0, spec.register_dim(1), DEFAULT_DIM_CAP)
        .unwrap();
        let out = apply_internal_noise(&s, &spec, 0, 1, 0).unwrap();
        let clean: f64 = out.undisturbed_component().iter().map(|a| a.norm_sqr()).sum();
        assert_abs_diff_eq!(out.norm_sqr(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(1.0 - clean, 0.2, epsilon = 1e-14);
    }

    #[test]
    fn sampling_edge_targets() {
        let one = RandomPhaseSpec::new(1.0, PhaseDistribution::PointMassMixture).unwrap();
        assert!(sample_phases_seeded(&one, 16, 4).iter().all(|&p| p == 0.0));
        let wrapped = RandomPhaseSpec::new(1.0, PhaseDistribution::WrappedGaussian).unwrap();
        assert!(sample_phases_seeded(&wrapped, 16, 4).iter().all(|&p| p == 0.0));
        assert!(RandomPhaseSpec::new(1.2, PhaseDistribution::PointMassMixture).is_err());
        assert!(RandomPhaseSpec::new(-0.1, PhaseDistribution::PointMassMixture).is_err());
    }

    #[test]
    fn uniform_phases_at_zero_target() {
        let spec = RandomPhaseSpec::new(0.0, PhaseDistribution::PointMassMixture).unwrap();
        let phases = sample_phases_seeded(&spec, 100_000, 9);
        let n = phases.len() as f64;
        let mean: C64 = phases.iter().map(|&p| C64::from_polar(1.0, p)).sum::<C64>() / n;
        // Uniform phases: each component has variance 1/2.
        assert!(mean.norm() < 4.0 * (0.5 / n).sqrt());
        assert!(phases.iter().all(|&p| (0.0..TAU).contains(&p)));
    }

    #[test]
    fn sampled_mean_matches_target() {
        for dist in [PhaseDistribution::PointMassMixture, PhaseDistribution::WrappedGaussian] {
            let spec = RandomPhaseSpec::new(0.9, dist).unwrap();
            let n = 100_000;
            let phases = sample_phases_seeded(&spec, n, 21);
            let mean: C64 = phases.iter().map(|&p| C64::from_polar(1.0, p)).sum::<C64>() / n as f64;
            assert!(
                (mean.re - 0.9).abs() < 3.0 * 0.44 / (n as f64).sqrt(),
                "{dist:?}: {mean}"
            );
        }
    }

    #[test]
    fn channel_factor_carries_alpha_phase() {
        let alpha = C64::from_polar(0.9, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mean: C64 = (0..n)
            .map(|_| sample_channel_factor(alpha, PhaseDistribution::PointMassMixture, &mut rng))
            .sum::<C64>()
            / n as f64;
        assert!((mean - alpha).norm() < 4.0 * 0.44 / (n as f64).sqrt());
    }

    #[test]
    fn alpha_from_length_cases() {
        assert_eq!(alpha_from_length(&LengthModel::new(0.0, 5.0).unwrap()), real(1.0));
        assert_eq!(alpha_from_length(&LengthModel::new(0.3, 0.0).unwrap()), real(1.0));
        let m = LengthModel::new((1.0f64 / 0.81).ln(), 1.0).unwrap();
        assert_abs_diff_eq!(alpha_from_length(&m).norm_sqr(), 0.81, epsilon = 1e-15);
        assert!(LengthModel::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn random_phases_reproduce_dilation() {
        let psi = [real(0.6), c64(0.0, 0.8)];
        let spec = PhaseNoiseSpec::from_alphas(&[0.9, 0.7]).unwrap();
        let exact = dephased_density_dilated(&psi, &spec).unwrap();
        assert_abs_diff_eq!(exact.entry(0, 1).norm(), 0.48 * 0.9 * 0.7, epsilon = 1e-12);
        let plan = McPlan::new(20_000, 3, 2).unwrap();
        let mc = dephased_density_monte_carlo(&psi, &spec, PhaseDistribution::default(), &plan).unwrap();
        assert!(mc.max_sigma_deviation(exact.matrix()) < 4.0);
    }
}
