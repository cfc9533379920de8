// Copyright 2026 The errfilt Authors
// SPDX-License-Identifier: Apache-2.0

//! Single-particle error filtration: encode, transmit through noisy
//! channels, decode, keep the useful receiver ports.
//!
//! [`run_exact`] carries every environment register along in one joint pure
//! state. [`run_reduced`] traces the registers out segment by segment, which
//! is equivalent but scales to many segments. [`run_monte_carlo`] replaces the
//! registers by sampled random phases.

use std::f64::consts::TAU;

use crate::codec::Codec;
use crate::error::{invalid, Error, Result};
use crate::hilbert::{
    fidelity_with_vector, phase, real, DenseOperator, DensityMatrix, Factor, LabeledState, C64, DEFAULT_DIM_CAP, TOL,
};
use crate::montecarlo::{run_sharded, Estimate, McPlan, Moments};
use crate::noise::{
    apply_internal_noise, apply_phase_noise, sample_channel_factor, InternalNoiseSpec, LengthModel, PhaseDistribution,
    PhaseNoiseSpec,
};

/// Number of phase points in the fringe sweep.
pub const FRINGE_POINTS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelNoise {
    Phase(PhaseNoiseSpec),
    /// Internal-state noise; every channel also carries `internal_state`.
    Internal {
        spec: InternalNoiseSpec,
        internal_state: Vec<C64>,
    },
}

impl ChannelNoise {
    fn internal_dim(&self) -> usize {
        match self {
            Self::Phase(_) => 1,
            Self::Internal { spec, .. } => spec.internal_dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiltrationConfig {
    codec: Codec,
    noise: ChannelNoise,
    segments: usize,
    length_model: Option<LengthModel>,
    input: Vec<C64>,
    module_noise: Option<PhaseNoiseSpec>,
    dim_cap: usize,
}

fn check_normalized(v: &[C64]) -> Result<()> {
    let n: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    if (n - 1.0).abs() > TOL {
        return Err(Error::NotNormalized(n));
    }
    Ok(())
}

impl FiltrationConfig {
    /// One segment, input on source channel 0.
    pub fn new(codec: Codec, noise: ChannelNoise) -> Result<Self> {
        match &noise {
            ChannelNoise::Phase(spec) => {
                if spec.len() != codec.t_tot() {
                    return Err(Error::DimensionMismatch {
                        expected: codec.t_tot(),
                        got: spec.len(),
                    });
                }
            }
            ChannelNoise::Internal { spec, internal_state } => {
                if internal_state.len() != spec.internal_dim() {
                    return Err(Error::DimensionMismatch {
                        expected: spec.internal_dim(),
                        got: internal_state.len(),
                    });
                }
                check_normalized(internal_state)?;
            }
        }
        let mut input = vec![C64::new(0.0, 0.0); codec.s_tot()];
        input[0] = real(1.0);
        Ok(Self {
            codec,
            noise,
            segments: 1,
            length_model: None,
            input,
            module_noise: None,
            dim_cap: DEFAULT_DIM_CAP,
        })
    }

    /// Identical real dephasing `|α|² = alpha2` on every transmission channel.
    pub fn uniform(codec: Codec, alpha2: f64) -> Result<Self> {
        let spec = PhaseNoiseSpec::uniform(codec.t_tot(), alpha2)?;
        Self::new(codec, ChannelNoise::Phase(spec))
    }

    pub fn with_segments(mut self, segments: usize) -> Result<Self> {
        if segments == 0 {
            return Err(invalid("Q must be at least 1"));
        }
        self.segments = segments;
        Ok(self)
    }

    pub fn with_input(mut self, input: Vec<C64>) -> Result<Self> {
        if input.len() != self.codec.s_tot() {
            return Err(Error::DimensionMismatch {
                expected: self.codec.s_tot(),
                got: input.len(),
            });
        }
        check_normalized(&input)?;
        self.input = input;
        Ok(self)
    }

    /// Derives the per-segment dephasing from fiber length: each of the `Q`
    /// segments gets `|α|² = e^{−γL/Q}`. Replaces any phase spec.
    pub fn with_length_model(mut self, model: LengthModel) -> Result<Self> {
        if !matches!(self.noise, ChannelNoise::Phase(_)) {
            return Err(invalid("a length model needs phase noise"));
        }
        self.length_model = Some(model);
        Ok(self)
    }

    /// Extra dephasing on the transmission channels inside every
    /// encode/decode module.
    pub fn with_module_noise(mut self, spec: PhaseNoiseSpec) -> Result<Self> {
        if spec.len() != self.codec.t_tot() {
            return Err(Error::DimensionMismatch {
                expected: self.codec.t_tot(),
                got: spec.len(),
            });
        }
        self.module_noise = Some(spec);
        Ok(self)
    }

    pub fn with_dim_cap(mut self, cap: usize) -> Self {
        self.dim_cap = cap;
        self
    }

    pub fn codec(&self) -> &Codec {
        &self.codec
    }

    pub fn noise(&self) -> &ChannelNoise {
        &self.noise
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn input(&self) -> &[C64] {
        &self.input
    }

    pub fn length_model(&self) -> Option<LengthModel> {
        self.length_model
    }

    pub fn module_noise(&self) -> Option<&PhaseNoiseSpec> {
        self.module_noise.as_ref()
    }

    /// The dephasing applied in each segment, if the noise is phase noise.
    pub fn segment_phase_noise(&self) -> Option<PhaseNoiseSpec> {
        match (&self.noise, self.length_model) {
            (ChannelNoise::Phase(_), Some(m)) => {
                let a2 = (-m.loss() / self.segments as f64).exp();
                PhaseNoiseSpec::uniform(self.codec.t_tot(), a2).ok()
            }
            (ChannelNoise::Phase(spec), None) => Some(spec.clone()),
            _ => None,
        }
    }

    fn internal_state(&self) -> &[C64] {
        match &self.noise {
            ChannelNoise::Phase(_) => &[],
            ChannelNoise::Internal { internal_state, .. } => internal_state,
        }
    }

    /// Source amplitudes joined with the internal state.
    fn system_vector(&self, source: &[C64]) -> Vec<C64> {
        match &self.noise {
            ChannelNoise::Phase(_) => source.to_vec(),
            ChannelNoise::Internal { internal_state, .. } => source
                .iter()
                .flat_map(|a| internal_state.iter().map(move |b| a * b))
                .collect(),
        }
    }

    fn system_dim(&self) -> usize {
        self.codec.s_tot() * self.noise.internal_dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiltrationOutcome {
    pub p_success: f64,
    pub p_success_no_error: f64,
    pub p_success_error: f64,
    pub conditional_fidelity: f64,
    pub visibility: Option<f64>,
}

impl FiltrationOutcome {
    /// `P(error | success)`
    pub fn p_error_given_success(&self) -> f64 {
        if self.p_success > 0.0 {
            self.p_success_error / self.p_success
        } else {
            0.0
        }
    }
}

fn initial_state(cfg: &FiltrationConfig, source: &[C64]) -> Result<LabeledState> {
    match &cfg.noise {
        ChannelNoise::Phase(_) => Ok(LabeledState::from_system_amplitudes(source)),
        ChannelNoise::Internal { spec, .. } => LabeledState::new_capped(
            vec![Factor::system(source.len()), Factor::system(spec.internal_dim())],
            cfg.system_vector(source),
            cfg.dim_cap,
        ),
    }
}

/// One encode/noise/decode/select segment. Returns the new state and the
/// largest amplitude that reached a discarded port with this segment's
/// registers undisturbed.
fn run_segment(cfg: &FiltrationConfig, state: &LabeledState, s: usize) -> Result<(LabeledState, f64)> {
    let t = cfg.codec.t_tot();
    let module_id = cfg.segments + s;
    let mut st = state.apply_local(0, cfg.codec.encoder())?;
    if let Some(spec) = &cfg.module_noise {
        st = st.with_env(module_id, t + 1, cfg.dim_cap)?;
        st = apply_phase_noise(&st, spec, 0, module_id)?;
    }
    st = match &cfg.noise {
        ChannelNoise::Phase(_) => {
            let spec = cfg.segment_phase_noise().expect("phase noise");
            st = st.with_env(s, t + 1, cfg.dim_cap)?;
            apply_phase_noise(&st, &spec, 0, s)?
        }
        ChannelNoise::Internal { spec, .. } => {
            st = st.with_env(s, spec.register_dim(t), cfg.dim_cap)?;
            apply_internal_noise(&st, spec, 0, 1, s)?
        }
    };
    st = st.apply_local(0, cfg.codec.decoder())?;

    let strides = st.strides();
    let factors = st.factors();
    let mut watched = vec![st.env_factor(s)?];
    if cfg.module_noise.is_some() {
        watched.push(st.env_factor(module_id)?);
    }
    let useful = cfg.codec.useful_ports();
    let mut leak: f64 = 0.0;
    for (flat, a) in st.amplitudes().iter().enumerate() {
        let port = (flat / strides[0]) % t;
        if useful.contains(&port) {
            continue;
        }
        if watched.iter().all(|&f| (flat / strides[f]) % factors[f].dim == 0) {
            leak = leak.max(a.norm());
        }
    }
    let selected = st.apply_local(0, &cfg.codec.port_selector())?;
    Ok((selected, leak))
}

fn propagate(cfg: &FiltrationConfig, source: &[C64]) -> Result<(LabeledState, f64)> {
    let mut state = initial_state(cfg, source)?;
    let mut leak: f64 = 0.0;
    for s in 0..cfg.segments {
        let (next, l) = run_segment(cfg, &state, s)?;
        state = next;
        leak = leak.max(l);
    }
    Ok((state, leak))
}

/// The post-selected joint state (useful ports ⊗ environment registers).
pub fn output_state(cfg: &FiltrationConfig) -> Result<LabeledState> {
    Ok(propagate(cfg, &cfg.input)?.0)
}

/// Largest amplitude found in a discarded receiver port while the
/// environment was still undisturbed; zero for a faithful codec.
pub fn discarded_port_overlap(cfg: &FiltrationConfig) -> Result<f64> {
    Ok(propagate(cfg, &cfg.input)?.1)
}

fn outcome_from_state(cfg: &FiltrationConfig, st: &LabeledState) -> Result<FiltrationOutcome> {
    let p_success = st.norm_sqr();
    let clean = st.undisturbed_component();
    let p_no: f64 = clean.iter().map(|a| a.norm_sqr()).sum();
    let strides = st.strides();
    let factors = st.factors();
    let p_err: f64 = st
        .amplitudes()
        .iter()
        .enumerate()
        .filter(|(flat, _)| {
            factors
                .iter()
                .enumerate()
                .any(|(f, x)| x.is_env() && !(flat / strides[f]).is_multiple_of(x.dim))
        })
        .map(|(_, a)| a.norm_sqr())
        .sum();
    let fidelity = if p_success > 0.0 {
        let rho = DensityMatrix::from_matrix_unchecked(st.partial_trace_env()?.matrix() / real(p_success));
        fidelity_with_vector(&rho, &cfg.system_vector(&cfg.input))?
    } else {
        0.0
    };
    Ok(FiltrationOutcome {
        p_success,
        p_success_no_error: p_no,
        p_success_error: p_err,
        conditional_fidelity: fidelity,
        visibility: None,
    })
}

/// Exact joint-state evaluation of the whole pipeline.
pub fn run_exact(cfg: &FiltrationConfig) -> Result<FiltrationOutcome> {
    let st = output_state(cfg)?;
    let mut out = outcome_from_state(cfg, &st)?;
    out.visibility = visibility_exact(cfg)?;
    Ok(out)
}

/// Equal-weight superposition of sources 0 and 1 with relative phase `phi`.
fn fringe_input(s_tot: usize, phi: f64) -> Vec<C64> {
    let h = 1.0 / 2f64.sqrt();
    let mut v = vec![C64::new(0.0, 0.0); s_tot];
    v[0] = real(h);
    v[1] = phase(phi) * h;
    v
}

fn fringe_phases() -> Vec<f64> {
    (0..FRINGE_POINTS)
        .map(|k| TAU * k as f64 / FRINGE_POINTS as f64)
        .collect()
}

/// Peak-to-trough contrast of the first harmonic fitted to equally spaced
/// samples of one period: `(I_max − I_min)/(I_max + I_min)` of the fit.
pub fn fitted_visibility(phis: &[f64], intensities: &[f64]) -> f64 {
    let n = intensities.len() as f64;
    let a = intensities.iter().sum::<f64>() / n;
    let b = 2.0 / n * phis.iter().zip(intensities).map(|(p, i)| i * p.cos()).sum::<f64>();
    let c = 2.0 / n * phis.iter().zip(intensities).map(|(p, i)| i * p.sin()).sum::<f64>();
    if a <= 0.0 {
        return 0.0;
    }
    (b.hypot(c) / a).min(1.0)
}

/// Fringe visibility between sources 0 and 1, measured in the
/// `(|0⟩ ± |1⟩)/√2` basis of the useful ports while sweeping the relative
/// source phase. `None` for single-source codecs.
pub fn visibility_exact(cfg: &FiltrationConfig) -> Result<Option<f64>> {
    let s = cfg.codec.s_tot();
    if s < 2 {
        return Ok(None);
    }
    let phis = fringe_phases();
    let mut intensities = Vec::with_capacity(phis.len());
    for &phi in &phis {
        let (st, _) = propagate(cfg, &fringe_input(s, phi))?;
        let stride = st.dim() / s;
        let amps = st.amplitudes();
        let i: f64 = (0..stride).map(|r| (amps[r] + amps[stride + r]).norm_sqr() / 2.0).sum();
        intensities.push(i);
    }
    Ok(Some(fitted_visibility(&phis, &intensities)))
}

/// `V = T|α|² / (T|α|² + |β|²)`
pub fn visibility_analytic(t: usize, alpha2: f64) -> f64 {
    let ta = t as f64 * alpha2;
    ta / (ta + (1.0 - alpha2))
}

/// `P_success = |α|² + |β|²/T`
pub fn p_success_analytic(t: usize, alpha2: f64) -> f64 {
    alpha2 + (1.0 - alpha2) / t as f64
}

/// Kraus operators of the full pipeline, one per joint environment outcome,
/// acting on (source ⊗ internal). Index 0 is the undisturbed branch.
pub fn success_kraus_operators(cfg: &FiltrationConfig) -> Result<Vec<DenseOperator>> {
    let d = cfg.system_dim();
    let s = cfg.codec.s_tot();
    let idim = cfg.noise.internal_dim();
    let mut columns: Vec<LabeledState> = Vec::with_capacity(d);
    for col in 0..d {
        let mut source = vec![C64::new(0.0, 0.0); s];
        source[col / idim] = real(1.0);
        let mut st = match &cfg.noise {
            ChannelNoise::Phase(_) => LabeledState::from_system_amplitudes(&source),
            ChannelNoise::Internal { spec, .. } => LabeledState::basis(
                vec![Factor::system(s), Factor::system(spec.internal_dim())],
                &[col / idim, col % idim],
            )?,
        };
        for seg in 0..cfg.segments {
            st = run_segment(cfg, &st, seg)?.0;
        }
        columns.push(st);
    }
    let env_dim = columns[0].dim() / d;
    Ok((0..env_dim)
        .map(|e| DenseOperator::from_fn(d, d, |r, c| columns[c].amplitudes()[r * env_dim + e]))
        .collect())
}

fn segment_kraus(cfg: &FiltrationConfig) -> Result<Vec<DenseOperator>> {
    let mut single = cfg.clone();
    if cfg.length_model.is_some() {
        single.noise = ChannelNoise::Phase(cfg.segment_phase_noise().expect("phase noise"));
        single.length_model = None;
    }
    single.segments = 1;
    success_kraus_operators(&single)
}

fn density_outcome(cfg: &FiltrationConfig, rho: &DensityMatrix, clean: &[C64]) -> Result<FiltrationOutcome> {
    let p_success = rho.trace();
    let p_no: f64 = clean.iter().map(|a| a.norm_sqr()).sum();
    let fidelity = if p_success > 0.0 {
        let norm = DensityMatrix::from_matrix_unchecked(rho.matrix() / real(p_success));
        fidelity_with_vector(&norm, &cfg.system_vector(&cfg.input))?
    } else {
        0.0
    };
    Ok(FiltrationOutcome {
        p_success,
        p_success_no_error: p_no,
        p_success_error: p_success - p_no,
        conditional_fidelity: fidelity,
        visibility: None,
    })
}

/// Same pipeline as [`run_exact`], but each segment's registers are traced
/// out before the next, so the cost does not grow with `Q`.
pub fn run_reduced(cfg: &FiltrationConfig) -> Result<FiltrationOutcome> {
    let kraus = segment_kraus(cfg)?;
    let evolve = |v: &[C64]| -> Result<(DensityMatrix, Vec<C64>)> {
        let mut rho = DensityMatrix::from_pure(v);
        let mut clean = v.to_vec();
        for _ in 0..cfg.segments {
            let mut next = DensityMatrix::from_matrix_unchecked(nalgebra::DMatrix::zeros(v.len(), v.len()));
            for k in &kraus {
                next = DensityMatrix::from_matrix_unchecked(next.matrix() + rho.conjugated(k)?.matrix());
            }
            rho = next;
            clean = kraus[0].apply(&clean)?;
        }
        Ok((rho, clean))
    };
    let (rho, clean) = evolve(&cfg.system_vector(&cfg.input))?;
    let mut out = density_outcome(cfg, &rho, &clean)?;
    let s = cfg.codec.s_tot();
    if s >= 2 {
        let idim = cfg.noise.internal_dim();
        let phis = fringe_phases();
        let mut intensities = Vec::with_capacity(phis.len());
        for &phi in &phis {
            let (r, _) = evolve(&cfg.system_vector(&fringe_input(s, phi)))?;
            let i: f64 = (0..idim)
                .map(|mu| {
                    let (a, b) = (mu, idim + mu);
                    (r.entry(a, a) + r.entry(b, b) + r.entry(a, b) + r.entry(b, a)).re / 2.0
                })
                .sum();
            intensities.push(i);
        }
        out.visibility = Some(fitted_visibility(&phis, &intensities));
    }
    Ok(out)
}

/// Conditional fidelity `Σ_e |⟨ψ|K_e|ψ⟩|² / Σ_e ‖K_e ψ‖²` of a pure input.
pub fn kraus_fidelity(kraus: &[DenseOperator], psi: &[C64]) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for k in kraus {
        let out = k.apply(psi)?;
        let overlap: C64 = psi.iter().zip(&out).map(|(a, b)| a.conj() * b).sum();
        num += overlap.norm_sqr();
        den += out.iter().map(|z| z.norm_sqr()).sum::<f64>();
    }
    if den <= 0.0 {
        return Err(Error::NumericalCheck("zero success probability".into()));
    }
    Ok(num / den)
}

// ---------------------------------------------------------------------------
// Non-identical channels
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonuniformReport {
    pub outcome: FiltrationOutcome,
    /// `ᾱ = (1/T) Σ α_j`
    pub alpha_mean: C64,
    /// `|Σ_j c_j α_j|²`, which is `|ᾱ|²` for a flat codec.
    pub predicted_no_error: f64,
    /// `Σ_j |c_j|² |β_j|²`, which is `(1/T²) Σ|β_j|²` for a flat codec.
    pub predicted_error: f64,
    /// `(1 − |ᾱ|²)/T`
    pub bound: f64,
    pub bound_holds: bool,
}

pub fn run_nonuniform(cfg: &FiltrationConfig) -> Result<NonuniformReport> {
    let spec = match &cfg.noise {
        ChannelNoise::Phase(spec) if cfg.length_model.is_none() => spec,
        _ => return Err(invalid("non-uniform analysis needs explicit per-channel phase noise")),
    };
    if cfg.segments != 1 || cfg.codec.s_tot() != 1 || cfg.module_noise.is_some() {
        return Err(invalid("non-uniform analysis covers one source and one segment"));
    }
    let outcome = run_exact(cfg)?;
    let c = cfg.codec.path_products(0);
    let t = spec.len() as f64;
    let alpha_mean = spec.alpha_mean();
    let no_err: C64 = c.iter().enumerate().map(|(j, cj)| cj * spec.alpha(j)).sum();
    let err: f64 = c
        .iter()
        .enumerate()
        .map(|(j, cj)| cj.norm_sqr() * spec.beta(j).norm_sqr())
        .sum();
    let bound = (1.0 - alpha_mean.norm_sqr()) / t;
    Ok(NonuniformReport {
        outcome,
        alpha_mean,
        predicted_no_error: no_err.norm_sqr(),
        predicted_error: err,
        bound,
        bound_holds: outcome.p_success_error <= bound + TOL,
    })
}

// ---------------------------------------------------------------------------
// Series filtration
// ---------------------------------------------------------------------------

/// `[e^{−γL/Q} + (1 − e^{−γL/Q})/T]^Q − e^{−γL}`: probability that the
/// particle reaches the useful port carrying an error after `Q` segments.
pub fn series_error_analytic(gamma: f64, length: f64, q: usize, t: usize) -> Result<f64> {
    if q == 0 || t == 0 {
        return Err(invalid("Q and T must be at least 1"));
    }
    LengthModel::new(gamma, length)?;
    let seg = (-gamma * length / q as f64).exp();
    Ok((seg + (1.0 - seg) / t as f64).powi(q as i32) - (-gamma * length).exp())
}

/// Two segments with one intermediate decode/encode module, for a channel of
/// total amplitude `|α|`: `(1 − |α|)(1 + 2T|α| − |α|)/T²`. Fails if the
/// result is not below the single-module error `|β|²/T` when `T ≥ 2`.
pub fn series_two_segment_analytic(alpha: f64, t: usize) -> Result<f64> {
    if t == 0 {
        return Err(invalid("T must be at least 1"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("|alpha| = {alpha} outside [0, 1]")));
    }
    let tf = t as f64;
    let v = (1.0 - alpha) * (1.0 + 2.0 * tf * alpha - alpha) / (tf * tf);
    let single = (1.0 - alpha * alpha) / tf;
    if t >= 2 && alpha > 0.0 && alpha < 1.0 && v >= single {
        return Err(Error::NumericalCheck(format!(
            "two-segment error {v} not below single-module error {single}"
        )));
    }
    Ok(v)
}

/// Limit of infinitely many modules: `|α|^{2(T−1)/T} − |α|²`.
pub fn series_limit_analytic(alpha: f64, t: usize) -> Result<f64> {
    if t == 0 {
        return Err(invalid("T must be at least 1"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("|alpha| = {alpha} outside [0, 1]")));
    }
    let tf = t as f64;
    Ok(alpha.powf(2.0 * (tf - 1.0) / tf) - alpha * alpha)
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOutcome {
    pub p_success: Estimate,
    pub p_success_no_error: Estimate,
    pub p_success_error: Estimate,
    pub conditional_fidelity: Estimate,
    pub visibility: Option<Estimate>,
}

/// Random-phase evaluation: every channel picks up `e^{iφ}` with
/// `E[e^{iφ}] = α_j`. The undisturbed branch is the phase-averaged output
/// amplitude, so `p_success_no_error = ‖E[ψ_out]‖²`.
pub fn run_monte_carlo(cfg: &FiltrationConfig, plan: &McPlan, distribution: PhaseDistribution) -> Result<McOutcome> {
    let spec = cfg
        .segment_phase_noise()
        .ok_or_else(|| invalid("Monte-Carlo sampling covers phase noise only"))?;
    let s = cfg.codec.s_tot();
    let t = cfg.codec.t_tot();
    let with_vis = s >= 2;
    let target = cfg.input.clone();
    let vis_input = if with_vis { fringe_input(s, 0.0) } else { Vec::new() };
    // Layout: |ψ|², Re ψ_i, Im ψ_i, |⟨target|ψ⟩|², then Re/Im of x̄y and |x|²+|y|².
    let base = 2 + 2 * s;
    let dim = base + if with_vis { 3 } else { 0 };

    let enc = cfg.codec.encoder();
    let dec = cfg.codec.decoder();
    let useful = cfg.codec.useful_ports().to_vec();
    let module = cfg.module_noise.clone();
    let q = cfg.segments;

    let moments = run_sharded(
        plan,
        || Moments::new(dim),
        |acc, rng| {
            let mut noise = Vec::with_capacity(q * t);
            for _ in 0..q {
                for j in 0..t {
                    let mut f = sample_channel_factor(spec.alpha(j), distribution, rng);
                    if let Some(m) = &module {
                        f *= sample_channel_factor(m.alpha(j), distribution, rng);
                    }
                    noise.push(f);
                }
            }
            let transmit = |v: &[C64]| -> Vec<C64> {
                let mut v = v.to_vec();
                for seg in 0..q {
                    let mut w = enc.apply(&v).expect("encoder shape");
                    for (j, x) in w.iter_mut().enumerate() {
                        *x *= noise[seg * t + j];
                    }
                    let u = dec.apply(&w).expect("decoder shape");
                    v = useful.iter().map(|&p| u[p]).collect();
                }
                v
            };
            let out = transmit(&target);
            let mut x = vec![0.0; dim];
            x[0] = out.iter().map(|z| z.norm_sqr()).sum();
            for (i, z) in out.iter().enumerate() {
                x[1 + 2 * i] = z.re;
                x[2 + 2 * i] = z.im;
            }
            let overlap: C64 = target.iter().zip(&out).map(|(a, b)| a.conj() * b).sum();
            x[base - 1] = overlap.norm_sqr();
            if with_vis {
                let f = transmit(&vis_input);
                let cross = f[0].conj() * f[1];
                x[base] = cross.re;
                x[base + 1] = cross.im;
                x[base + 2] = f[0].norm_sqr() + f[1].norm_sqr();
            }
            acc.push(&x);
        },
        |a, b| a.merge(b),
    );

    let p_success = moments.estimate(0);
    let no_err = |m: &[f64]| (0..s).map(|i| m[1 + 2 * i].powi(2) + m[2 + 2 * i].powi(2)).sum::<f64>();
    let p_no = moments.delta_fn(no_err);
    let p_err = moments.delta_fn(|m| m[0] - no_err(m));
    let fidelity = moments.delta_fn(|m| m[base - 1] / m[0]);
    let visibility = with_vis.then(|| moments.delta_fn(|m| 2.0 * m[base].hypot(m[base + 1]) / m[base + 2]));
    Ok(McOutcome {
        p_success,
        p_success_no_error: p_no,
        p_success_error: p_err,
        conditional_fidelity: fidelity,
        visibility,
    })
}

// ---------------------------------------------------------------------------
// Collective encoding
// ---------------------------------------------------------------------------

/// Fidelity of source state `a₁|0⟩ + a₂|1⟩` through the collective
/// `S = 2 → T = 3` codec: `(|α|² + |β|²/3·(1 + 2|a₁|²|a₂|²)) / (|α|² + 2|β|²/3)`.
pub fn collective_fidelity_analytic(alpha2: f64, a1: C64, a2: C64) -> f64 {
    let b2 = 1.0 - alpha2;
    let cross = a1.norm_sqr() * a2.norm_sqr();
    (alpha2 + b2 / 3.0 * (1.0 + 2.0 * cross)) / (alpha2 + 2.0 * b2 / 3.0)
}

/// Average of [`collective_fidelity_analytic`] over the Bloch sphere:
/// `(|α|² + 4|β|²/9) / (|α|² + 2|β|²/3)`.
pub fn collective_bloch_average_analytic(alpha2: f64) -> f64 {
    let b2 = 1.0 - alpha2;
    (alpha2 + 4.0 * b2 / 9.0) / (alpha2 + 2.0 * b2 / 3.0)
}

/// Bloch-sphere average fidelity when each source uses its own channel:
/// `1 − |β|²/3`.
pub fn trivial_bloch_average_analytic(alpha2: f64) -> f64 {
    1.0 - (1.0 - alpha2) / 3.0
}

/// Monte-Carlo average of the exact conditional fidelity over Haar-random
/// pure source states.
pub fn bloch_average_monte_carlo(cfg: &FiltrationConfig, plan: &McPlan) -> Result<Estimate> {
    let kraus = success_kraus_operators(cfg)?;
    let d = cfg.system_dim();
    let idim = cfg.noise.internal_dim();
    let internal = cfg.internal_state().to_vec();
    let m = run_sharded(
        plan,
        || Moments::new(1),
        |acc, rng| {
            let a = crate::hilbert::random_state(cfg.codec.s_tot(), rng);
            let psi: Vec<C64> = if idim == 1 {
                a
            } else {
                a.iter().flat_map(|x| internal.iter().map(move |y| x * y)).collect()
            };
            debug_assert_eq!(psi.len(), d);
            acc.push(&[kraus_fidelity(&kraus, &psi).expect("faithful codec has nonzero success")]);
        },
        |a, b| a.merge(b),
    );
    Ok(m.estimate(0))
}

// ---------------------------------------------------------------------------
// Thresholds
// ---------------------------------------------------------------------------

/// Fidelity above which BB84 remains secure.
pub const BB84_THRESHOLD: f64 = 0.85;
/// Fidelity above which a Werner state is entangled.
pub const WERNER_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdReport {
    pub bb84_secure: bool,
    pub werner_entangled: bool,
}

/// Strict comparisons: a fidelity exactly at a cutoff does not qualify.
pub fn threshold_report(fidelity: f64) -> Result<ThresholdReport> {
    if !(0.0..=1.0).contains(&fidelity) {
        return Err(invalid(format!("fidelity {fidelity} outside [0, 1]")));
    }
    Ok(ThresholdReport {
        bb84_secure: fidelity > BB84_THRESHOLD,
        werner_entangled: fidelity > WERNER_THRESHOLD,
    })
}
