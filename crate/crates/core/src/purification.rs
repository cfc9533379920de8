// Copyright 2026 The errfilt Authors
// SPDX-License-Identifier: Apache-2.0

//! Entanglement purification by source multiplexing.
//!
//! The source emits `|ψ_n⟩ = n^{-1/2} Σ_j |j⟩_A|j⟩_B`. Both arms dephase
//! independently. Each receiver applies a decoder (the pair being complex
//! conjugates of each other) and keeps the particle only if it lands in a
//! window of `m` consecutive channels.

use crate::codec::{hadamard_matrix, Codec};
use crate::error::{invalid, Error, Result};
use crate::filtration::{success_kraus_operators, FiltrationConfig};
use crate::hilbert::{
    fidelity_with_vector, phase, random_unitary, real, DenseOperator, DensityMatrix, Factor, LabeledState, Tensor, C64,
    TOL,
};
use crate::noise::{apply_phase_noise, PhaseNoiseSpec};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

#[derive(Debug, Clone, PartialEq)]
pub enum DecoderKind {
    /// `U_A|j⟩ = n^{-1/2} Σ_k e^{−2πijk/n}|k⟩` (indices from 1), `U_B = U_A*`.
    FourierConjugatePair,
    /// The real Hadamard matrix on both arms; `n` must be a power of 2.
    HadamardPair,
    /// Explicit `U_A` (column `i` holds `u_{i·}`) and `U_B`, which must be its
    /// entrywise conjugate.
    Custom { a: DenseOperator, b: DenseOperator },
}

impl DecoderKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::FourierConjugatePair => "fourier",
            Self::HadamardPair => "hadamard",
            Self::Custom { .. } => "custom",
        }
    }
}

/// The decoder of arm A for `n` channels: `e^{−2πijk/n}/√n` with `j, k`
/// counted from 1.
pub fn fourier_decoder_a(n: usize) -> DenseOperator {
    let norm = 1.0 / (n as f64).sqrt();
    DenseOperator::from_fn(n, n, |k, j| {
        phase(-TAU * (((j + 1) * (k + 1)) % n) as f64 / n as f64) * norm
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PurifyConfig {
    n: usize,
    m: usize,
    p: f64,
    decoder: DecoderKind,
    offset: usize,
}

impl PurifyConfig {
    pub fn new(n: usize, m: usize, p: f64, decoder: DecoderKind) -> Result<Self> {
        if m == 0 || m > n {
            return Err(invalid(format!("need 1 <= m <= n, got m={m}, n={n}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("p = {p} outside [0, 1]")));
        }
        match &decoder {
            DecoderKind::FourierConjugatePair => {}
            DecoderKind::HadamardPair => {
                hadamard_matrix(n).map_err(|e| Error::InvalidDecoder(e.to_string()))?;
            }
            DecoderKind::Custom { a, b } => {
                if a.rows() != n || a.cols() != n || b.rows() != n || b.cols() != n {
                    return Err(Error::InvalidDecoder(format!("decoders must be {n}x{n}")));
                }
                if !a.is_unitary() {
                    return Err(Error::InvalidDecoder("U_A is not unitary".into()));
                }
                let dev = b.max_abs_diff(&a.conj());
                if dev > TOL {
                    return Err(Error::InvalidDecoder(format!(
                        "U_B is not the conjugate of U_A (deviation {dev:e})"
                    )));
                }
            }
        }
        Ok(Self {
            n,
            m,
            p,
            decoder,
            offset: 0,
        })
    }

    /// Builds the custom pair from `U_A` alone.
    pub fn with_custom_decoder(n: usize, m: usize, p: f64, a: DenseOperator) -> Result<Self> {
        let b = a.conj();
        Self::new(n, m, p, DecoderKind::Custom { a, b })
    }

    /// Window start `c`; the kept channels are `c..c+m`.
    pub fn with_offset(mut self, offset: usize) -> Result<Self> {
        if offset + self.m > self.n {
            return Err(invalid(format!(
                "window {offset}..{} exceeds n = {}",
                offset + self.m,
                self.n
            )));
        }
        self.offset = offset;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn decoder(&self) -> &DecoderKind {
        &self.decoder
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// `(U_A, U_B)`
    pub fn decoders(&self) -> (DenseOperator, DenseOperator) {
        match &self.decoder {
            DecoderKind::FourierConjugatePair => {
                let a = fourier_decoder_a(self.n);
                let b = a.conj();
                (a, b)
            }
            DecoderKind::HadamardPair => {
                let h = hadamard_matrix(self.n).expect("checked at construction");
                (h.clone(), h)
            }
            DecoderKind::Custom { a, b } => (a.clone(), b.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PurificationOutcome {
    /// Normalized two-party state on the kept `m × m` window.
    pub rho_f: DensityMatrix,
    pub fidelity_f_prime: f64,
    pub p_success: f64,
    pub p_success_total: f64,
    pub blocks: usize,
}

/// `|ψ_n⟩` as an `n²` vector (arm A index major).
pub fn max_entangled(n: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); n * n];
    let a = real(1.0 / (n as f64).sqrt());
    for j in 0..n {
        v[j * n + j] = a;
    }
    v
}

/// `ρ_n = p P_ψ + ((1 − p)/n) Σ_j P_jj`
pub fn rho_after_noise(n: usize, p: f64) -> Result<DensityMatrix> {
    if n == 0 || !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("need n >= 1 and p in [0, 1], got n={n}, p={p}")));
    }
    let psi = max_entangled(n);
    let mut m = DMatrix::from_fn(n * n, n * n, |r, c| psi[r] * psi[c].conj() * p);
    for j in 0..n {
        m[(j * n + j, j * n + j)] += real((1.0 - p) / n as f64);
    }
    DensityMatrix::new(m)
}

/// The same state built from first principles: dephase each arm with
/// `|α|² = √p` onto its own register and trace both registers out.
pub fn rho_after_noise_dilated(n: usize, p: f64) -> Result<DensityMatrix> {
    if n == 0 || !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("need n >= 1 and p in [0, 1], got n={n}, p={p}")));
    }
    let spec = PhaseNoiseSpec::uniform(n, p.sqrt())?;
    let pair = LabeledState::new(vec![Factor::system(n), Factor::system(n)], max_entangled(n))?;
    let regs = LabeledState::basis(vec![Factor::env(0, n + 1), Factor::env(1, n + 1)], &[0, 0])?;
    let st = pair.tensor(&regs)?;
    let st = apply_phase_noise(&st, &spec, 0, 0)?;
    let st = apply_phase_noise(&st, &spec, 1, 1)?;
    st.partial_trace_env()
}

/// `F_m = p + (1 − p)/m`
pub fn fidelity_unfiltered(m: usize, p: f64) -> f64 {
    p + (1.0 - p) / m as f64
}

/// `P_success = p·m/n + (1 − p)·m²/n²`
pub fn p_success_closed_form(n: usize, m: usize, p: f64) -> f64 {
    let r = m as f64 / n as f64;
    p * r + (1.0 - p) * r * r
}

/// `F'_m = ((n − 1)p + 1)/((n − m)p + m)`
pub fn fidelity_closed_form(n: usize, m: usize, p: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    ((n - 1.0) * p + 1.0) / ((n - m) * p + m)
}

/// `⌊n/m⌋ · P_success`
pub fn total_success_closed_form(n: usize, m: usize, p: f64) -> f64 {
    (n / m) as f64 * p_success_closed_form(n, m, p)
}

/// `(U_A ⊗ U_B) ρ (U_A ⊗ U_B)†`
fn decoded(cfg: &PurifyConfig, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let (a, b) = cfg.decoders();
    rho.conjugated(&a.tensor(&b)?)
}

/// Restriction of an `n² × n²` operator to window `c..c+m` on both arms.
fn window_block(m_full: &DMatrix<C64>, n: usize, m: usize, c: usize) -> DMatrix<C64> {
    let idx = |r: usize| {
        let (ka, kb) = (r / m, r % m);
        (c + ka) * n + (c + kb)
    };
    DMatrix::from_fn(m * m, m * m, |r, s| m_full[(idx(r), idx(s))])
}

fn purify_window(cfg: &PurifyConfig, dec: &DensityMatrix) -> Result<PurificationOutcome> {
    let (n, m) = (cfg.n, cfg.m);
    let block = window_block(dec.matrix(), n, m, cfg.offset);
    let p_success = block.trace().re;
    if p_success <= 0.0 {
        return Err(Error::NumericalCheck("window has zero success probability".into()));
    }
    let rho_f = DensityMatrix::new(block / real(p_success))?;
    let fidelity = fidelity_with_vector(&rho_f, &max_entangled(m))?;
    let blocks = n / m;
    Ok(PurificationOutcome {
        rho_f,
        fidelity_f_prime: fidelity,
        p_success,
        p_success_total: blocks as f64 * p_success,
        blocks,
    })
}

/// Explicit construction: decode `ρ_n`, project both arms on the window,
/// normalize.
pub fn purify(cfg: &PurifyConfig) -> Result<PurificationOutcome> {
    let dec = decoded(cfg, &rho_after_noise(cfg.n, cfg.p)?)?;
    purify_window(cfg, &dec)
}

/// One outcome per orthogonal window `c = 0, m, 2m, …`.
pub fn purify_blocks(cfg: &PurifyConfig) -> Result<Vec<PurificationOutcome>> {
    let dec = decoded(cfg, &rho_after_noise(cfg.n, cfg.p)?)?;
    (0..cfg.n / cfg.m)
        .map(|b| purify_window(&cfg.clone().with_offset(b * cfg.m)?, &dec))
        .collect()
}

/// Probability that some window succeeds, from the explicit blocks.
pub fn total_success(cfg: &PurifyConfig) -> Result<f64> {
    Ok(purify_blocks(cfg)?.iter().map(|o| o.p_success).sum())
}

/// Unnormalized mixed part predicted for the decoded state:
/// `((1 − p)/n²) δ(k − k' − l + l' mod n)` at `|k l⟩⟨k' l'|`.
pub fn mixed_part_entry(n: usize, p: f64, k: usize, l: usize, k2: usize, l2: usize) -> f64 {
    let s = (k + l2 + 2 * n - k2 - l) % n;
    if s == 0 {
        (1.0 - p) / (n * n) as f64
    } else {
        0.0
    }
}

/// Largest deviation of the decoded, window-projected state (unnormalized)
/// from `p(m/n) P_ψ' + mixed part`.
pub fn cross_term_deviation(cfg: &PurifyConfig) -> Result<f64> {
    let (n, m, p) = (cfg.n, cfg.m, cfg.p);
    let dec = decoded(cfg, &rho_after_noise(n, p)?)?;
    let block = window_block(dec.matrix(), n, m, cfg.offset);
    let psi = max_entangled(m);
    let c = cfg.offset;
    let mut worst: f64 = 0.0;
    for r in 0..m * m {
        for s in 0..m * m {
            let (k, l, k2, l2) = (c + r / m, c + r % m, c + s / m, c + s % m);
            let expect = p * m as f64 / n as f64 * (psi[r] * psi[s].conj()).re + mixed_part_entry(n, p, k, l, k2, l2);
            worst = worst.max((block[(r, s)] - real(expect)).norm());
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Two-party protocols
// ---------------------------------------------------------------------------

/// `F(Y) = (pR/S + (1 − p)Y/(RS)) / (pR/S + (1 − p)Y/S)`
pub fn protocol1_fidelity_from_y(s: usize, r: usize, p: f64, y: f64) -> f64 {
    let (s, r) = (s as f64, r as f64);
    (p * r / s + (1.0 - p) * y / (r * s)) / (p * r / s + (1.0 - p) * y / s)
}

/// Multiplexing at the source with the Schwarz-optimal decoder (`Y = R²/S`).
pub fn protocol1_fidelity(s: usize, r: usize, p: f64) -> Result<f64> {
    if r == 0 || r > s {
        return Err(invalid(format!("need 1 <= R <= S, got R={r}, S={s}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("p = {p} outside [0, 1]")));
    }
    let (sf, rf) = (s as f64, r as f64);
    Ok(protocol1_fidelity_from_y(s, r, p, rf * rf / sf))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Protocol1Report {
    /// `F` from the explicitly built, projected two-party state.
    pub fidelity: f64,
    pub p_success: f64,
    /// `Y = Σ_i ⟨i|U†ΠU|i⟩²`
    pub y: f64,
    /// `R²/S`
    pub y_bound: f64,
    /// Every diagonal element `⟨i|U†ΠU|i⟩` equals `R/S`.
    pub balanced: bool,
}

/// Runs the protocol with decoder `U_A = u` (and `U_B = u*`), keeping the
/// first `r` receiver channels.
pub fn protocol1_explicit(u: &DenseOperator, r: usize, p: f64) -> Result<Protocol1Report> {
    let s = u.rows();
    let cfg = PurifyConfig::with_custom_decoder(s, r, p, u.clone())?;
    let out = purify(&cfg)?;
    let diag: Vec<f64> = (0..s).map(|i| (0..r).map(|k| u.entry(k, i).norm_sqr()).sum()).collect();
    let target = r as f64 / s as f64;
    Ok(Protocol1Report {
        fidelity: out.fidelity_f_prime,
        p_success: out.p_success,
        y: diag.iter().map(|d| d * d).sum(),
        y_bound: r as f64 * target,
        balanced: diag.iter().all(|d| (d - target).abs() <= TOL),
    })
}

/// `(|α|⁴ + [(|α|² + |β|²/T)² − |α|⁴] Σ|a_i|⁴) / (|α|² + |β|²/T)²`
pub fn protocol2_fidelity(a: &[C64], alpha2: f64, t: usize) -> Result<f64> {
    let norm: f64 = a.iter().map(|x| x.norm_sqr()).sum();
    if (norm - 1.0).abs() > TOL {
        return Err(Error::NotNormalized(norm));
    }
    if !(0.0..=1.0).contains(&alpha2) || t == 0 {
        return Err(invalid("need alpha2 in [0, 1] and T >= 1"));
    }
    let q = alpha2 + (1.0 - alpha2) / t as f64;
    let a4 = alpha2 * alpha2;
    let s4: f64 = a.iter().map(|x| x.norm_sqr().powi(2)).sum();
    Ok((a4 + (q * q - a4) * s4) / (q * q))
}

/// Builds the filtered two-party state for `Σ a_i |i⟩_A|i⟩_B` with every
/// source channel of each arm spread over `t` Fourier channels, and returns
/// its fidelity to the input.
pub fn protocol2_explicit(a: &[C64], alpha2: f64, t: usize) -> Result<f64> {
    let s = a.len();
    let codec = Codec::fourier(t)?.multiplexed(s)?;
    let arm = FiltrationConfig::uniform(codec, alpha2)?;
    let kraus = success_kraus_operators(&arm)?;
    let psi = DMatrix::from_fn(s, s, |r, c| if r == c { a[r] } else { C64::new(0.0, 0.0) });
    let (mut num, mut den) = (0.0, 0.0);
    let transposed: Vec<DMatrix<C64>> = kraus.iter().map(|k| k.matrix().transpose()).collect();
    for ka in &kraus {
        let left = ka.matrix() * &psi;
        for kb in &transposed {
            let v = &left * kb;
            let overlap: C64 = (0..s).map(|i| a[i].conj() * v[(i, i)]).sum();
            num += overlap.norm_sqr();
            den += v.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
    }
    if den <= 0.0 {
        return Err(Error::NumericalCheck("zero success probability".into()));
    }
    Ok(num / den)
}

// ---------------------------------------------------------------------------
// Deferred post-selection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeferredReport {
    /// Probability of the up-front projection succeeding.
    pub p_projected_first: f64,
    /// Probability of the final presence check succeeding.
    pub p_checked_last: f64,
    /// Largest entrywise difference between the two conditional states.
    pub max_state_difference: f64,
}

/// Compares projecting on the window before local processing with running
/// the processing first and checking for the particle afterwards. The
/// processing is a random unitary on each party's window, seeded by `seed`.
pub fn deferred_postselection_demo(cfg: &PurifyConfig, seed: u64) -> Result<DeferredReport> {
    let (n, m, c) = (cfg.n, cfg.m, cfg.offset);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let embed = |w: &DenseOperator| {
        DenseOperator::from_fn(n, n, |r, s| {
            let inside = |x: usize| x >= c && x < c + m;
            match (inside(r), inside(s)) {
                (true, true) => w.entry(r - c, s - c),
                (false, false) if r == s => real(1.0),
                _ => C64::new(0.0, 0.0),
            }
        })
    };
    let wa = embed(&random_unitary(m, &mut rng));
    let wb = embed(&random_unitary(m, &mut rng));
    let w = wa.tensor(&wb)?;
    let window: Vec<usize> = (c..c + m).collect();
    let q1 = DenseOperator::projector_onto(n, &window)?;
    let q = q1.tensor(&q1)?;

    let dec = decoded(cfg, &rho_after_noise(n, cfg.p)?)?;
    let first = dec.conjugated(&q)?;
    let p_first = first.trace();
    let first = first.conjugated(&w)?;
    let last = dec.conjugated(&w)?.conjugated(&q)?;
    let p_last = last.trace();
    let diff = (first.matrix() / real(p_first) - last.matrix() / real(p_last))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    Ok(DeferredReport {
        p_projected_first: p_first,
        p_checked_last: p_last,
        max_state_difference: diff,
    })
}
