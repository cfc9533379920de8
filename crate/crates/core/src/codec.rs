// Copyright 2026 The errfilt Authors
// SPDX-License-Identifier: Apache-2.0

//! Encoder/decoder pairs.
//!
//! A codec maps `S` source channels into `T` transmission channels with an
//! isometric encoder, and unitarily mixes the `T` channels back at the
//! receiver. Only the `S` useful receiver ports are kept; the rest are
//! discarded as carrying noise.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::hilbert::{c64, phase, real, DenseOperator, C64, TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodecKind {
    Fourier,
    Hadamard,
    CollectiveFourier,
    Custom,
}

impl CodecKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Fourier => "fourier",
            Self::Hadamard => "hadamard",
            Self::CollectiveFourier => "collective-fourier",
            Self::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codec {
    kind: CodecKind,
    encoder: DenseOperator,
    decoder: DenseOperator,
    useful: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecReport {
    pub faithful: bool,
    pub optimal: bool,
    /// `max_i Σ_j |⟨j|U_e|i⟩⟨u_i|U_d|j⟩|²`
    pub reduction_factor: f64,
    pub faithfulness_error: f64,
}

/// `T×T` matrix with entries `e^{2πi(j+1)k/T}/√T` at row `k`, column `j`.
pub fn fourier_decoder(t: usize) -> DenseOperator {
    let norm = 1.0 / (t as f64).sqrt();
    DenseOperator::from_fn(t, t, |k, j| phase(TAU * (((j + 1) * k) % t) as f64 / t as f64) * norm)
}

/// `T×T` Hadamard matrix in the sign order
/// `(−1)^{popcount(bitrev(i) & j)} / √T`, symmetric and self-inverse.
pub fn hadamard_matrix(t: usize) -> Result<DenseOperator> {
    if t == 0 || !t.is_power_of_two() {
        return Err(invalid(format!("Hadamard size {t} is not a power of 2")));
    }
    let bits = t.trailing_zeros();
    let norm = 1.0 / (t as f64).sqrt();
    Ok(DenseOperator::from_fn(t, t, |i, j| {
        let ri = if bits == 0 {
            0
        } else {
            i.reverse_bits() >> (usize::BITS - bits)
        };
        if (ri & j).count_ones() % 2 == 0 {
            real(norm)
        } else {
            real(-norm)
        }
    }))
}

impl Codec {
    fn checked(kind: CodecKind, encoder: DenseOperator, decoder: DenseOperator, useful: Vec<usize>) -> Result<Self> {
        let (t, s) = (encoder.rows(), encoder.cols());
        if s == 0 || t == 0 {
            return Err(invalid("codec dimensions must be positive"));
        }
        if s > t {
            return Err(invalid(format!("S_tot = {s} exceeds T_tot = {t}")));
        }
        if decoder.rows() != t || decoder.cols() != t {
            return Err(Error::DimensionMismatch {
                expected: t,
                got: decoder.cols(),
            });
        }
        if useful.len() != s {
            return Err(Error::DimensionMismatch {
                expected: s,
                got: useful.len(),
            });
        }
        let mut sorted = useful.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != s || sorted.last().is_some_and(|&u| u >= t) {
            return Err(invalid("useful ports must be distinct receiver indices"));
        }
        let dev = encoder.isometry_deviation().max(decoder.isometry_deviation());
        if dev > TOL {
            return Err(Error::NotIsometric(dev));
        }
        Ok(Self {
            kind,
            encoder,
            decoder,
            useful,
        })
    }

    /// One source channel spread uniformly over `t` channels, decoded by the
    /// inverse transform; the useful port is receiver channel 0.
    pub fn fourier(t: usize) -> Result<Self> {
        if t == 0 {
            return Err(invalid("T must be at least 1"));
        }
        let norm = real(1.0 / (t as f64).sqrt());
        let encoder = DenseOperator::from_fn(t, 1, |_, _| norm);
        Self::checked(CodecKind::Fourier, encoder, fourier_decoder(t), vec![0])
    }

    pub fn hadamard(t: usize) -> Result<Self> {
        let h = hadamard_matrix(t)?;
        let encoder = DenseOperator::from_fn(t, 1, |j, _| h.entry(j, 0));
        Self::checked(CodecKind::Hadamard, encoder, h, vec![0])
    }

    /// All `s` sources spread jointly over `t ≥ s` channels:
    /// `|j⟩ ↦ (1/√T) Σ_k e^{−2πi(k+1)j/T} |k⟩`.
    pub fn collective_fourier(s: usize, t: usize) -> Result<Self> {
        if s == 0 || s > t {
            return Err(invalid(format!("collective codec needs 1 <= S <= T, got S={s}, T={t}")));
        }
        let norm = 1.0 / (t as f64).sqrt();
        let encoder = DenseOperator::from_fn(t, s, |k, j| phase(-TAU * (((k + 1) * j) % t) as f64 / t as f64) * norm);
        let decoder = DenseOperator::from_fn(t, t, |m, k| phase(TAU * (((k + 1) * m) % t) as f64 / t as f64) * norm);
        Self::checked(CodecKind::CollectiveFourier, encoder, decoder, (0..s).collect())
    }

    /// Every source sent down its own channel.
    pub fn identity(s: usize) -> Result<Self> {
        Self::custom(
            DenseOperator::identity(s),
            DenseOperator::identity(s),
            (0..s).collect(),
            false,
        )
    }

    /// Explicit matrices. Non-isometric maps are always refused; unfaithful
    /// pairs are refused unless `force` is set.
    pub fn custom(encoder: DenseOperator, decoder: DenseOperator, useful: Vec<usize>, force: bool) -> Result<Self> {
        let codec = Self::checked(CodecKind::Custom, encoder, decoder, useful)?;
        let report = codec.validate();
        if !report.faithful && !force {
            return Err(Error::Unfaithful(report.faithfulness_error));
        }
        Ok(codec)
    }

    /// `copies` independent instances side by side (direct sum).
    pub fn multiplexed(&self, copies: usize) -> Result<Self> {
        if copies == 0 {
            return Err(invalid("multiplex needs at least one copy"));
        }
        let mut enc = self.encoder.clone();
        let mut dec = self.decoder.clone();
        let mut useful = self.useful.clone();
        for c in 1..copies {
            enc = enc.direct_sum(&self.encoder);
            dec = dec.direct_sum(&self.decoder);
            useful.extend(self.useful.iter().map(|u| u + c * self.t_tot()));
        }
        Self::checked(self.kind, enc, dec, useful)
    }

    pub fn kind(&self) -> CodecKind {
        self.kind
    }

    pub fn encoder(&self) -> &DenseOperator {
        &self.encoder
    }

    pub fn decoder(&self) -> &DenseOperator {
        &self.decoder
    }

    pub fn useful_ports(&self) -> &[usize] {
        &self.useful
    }

    pub fn s_tot(&self) -> usize {
        self.encoder.cols()
    }

    pub fn t_tot(&self) -> usize {
        self.encoder.rows()
    }

    /// Map from the `T` receiver ports onto the `S` useful ones.
    pub fn port_selector(&self) -> DenseOperator {
        DenseOperator::selector(self.t_tot(), &self.useful).expect("useful ports checked at construction")
    }

    /// `c_j = ⟨j|U_e|i⟩⟨u_i|U_d|j⟩` for source `i`.
    pub fn path_products(&self, source: usize) -> Vec<C64> {
        let u = self.useful[source];
        (0..self.t_tot())
            .map(|j| self.encoder.entry(j, source) * self.decoder.entry(u, j))
            .collect()
    }

    pub fn validate(&self) -> CodecReport {
        let composite = self
            .decoder
            .compose(&self.encoder)
            .expect("shapes checked at construction");
        let mut faith: f64 = 0.0;
        for i in 0..self.s_tot() {
            for r in 0..self.t_tot() {
                let target = if r == self.useful[i] { 1.0 } else { 0.0 };
                faith = faith.max((composite.entry(r, i) - real(target)).norm());
            }
        }
        let mut optimal = true;
        let mut reduction: f64 = 0.0;
        for i in 0..self.s_tot() {
            let c = self.path_products(i);
            let support: Vec<f64> = c.iter().map(|z| z.norm()).filter(|&x| x > TOL).collect();
            if let Some(&first) = support.first() {
                let target = 1.0 / support.len() as f64;
                optimal &= support
                    .iter()
                    .all(|&x| (x - first).abs() <= TOL && (x - target).abs() <= TOL);
            } else {
                optimal = false;
            }
            reduction = reduction.max(c.iter().map(|z| z.norm_sqr()).sum());
        }
        let faithful = faith <= TOL;
        CodecReport {
            faithful,
            optimal: optimal && faithful,
            reduction_factor: reduction,
            faithfulness_error: faith,
        }
    }

    /// Plain-text form: a `codec <S> <T>` header, `T` encoder rows of `S`
    /// `re im` pairs, `T` decoder rows of `T` pairs, and a `useful` line.
    pub fn to_text(&self) -> String {
        let mut out = format!("codec {} {}\n", self.s_tot(), self.t_tot());
        for m in [&self.encoder, &self.decoder] {
            for r in 0..m.rows() {
                let row: Vec<String> = (0..m.cols())
                    .map(|c| {
                        let z = m.entry(r, c);
                        format!("{:e} {:e}", z.re, z.im)
                    })
                    .collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        let useful: Vec<String> = self.useful.iter().map(|u| u.to_string()).collect();
        let _ = writeln!(out, "useful {}", useful.join(" "));
        out
    }

    /// Parses [`Codec::to_text`] output. The `useful` line is optional and
    /// defaults to ports `0..S`.
    pub fn from_text(text: &str, force: bool) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let parse_err = |line: usize, msg: String| Error::Parse { line, msg };

        let (hline, header) = lines.next().ok_or(parse_err(1, "empty codec text".into()))?;
        let words: Vec<&str> = header.split_whitespace().collect();
        if words.len() != 3 || words[0] != "codec" {
            return Err(parse_err(hline, "expected `codec <S_tot> <T_tot>`".into()));
        }
        let dim = |w: &str| {
            w.parse::<usize>()
                .map_err(|e| parse_err(hline, format!("bad dimension `{w}`: {e}")))
        };
        let (s, t) = (dim(words[1])?, dim(words[2])?);

        let mut read_block = |rows: usize, cols: usize| -> Result<DenseOperator> {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (ln, row) = lines
                    .next()
                    .ok_or(parse_err(0, "unexpected end of codec text".into()))?;
                let nums: Vec<f64> = row
                    .split_whitespace()
                    .map(|w| {
                        w.parse::<f64>()
                            .map_err(|e| parse_err(ln, format!("bad number `{w}`: {e}")))
                    })
                    .collect::<Result<_>>()?;
                if nums.len() != 2 * cols {
                    return Err(parse_err(
                        ln,
                        format!("expected {} numbers, found {}", 2 * cols, nums.len()),
                    ));
                }
                data.extend(nums.chunks(2).map(|p| c64(p[0], p[1])));
            }
            DenseOperator::from_row_slice(rows, cols, &data)
        };
        let encoder = read_block(t, s)?;
        let decoder = read_block(t, t)?;
        let useful = match lines.next() {
            None => (0..s).collect(),
            Some((ln, l)) => {
                let mut words = l.split_whitespace();
                if words.next() != Some("useful") {
                    return Err(parse_err(ln, "expected `useful <ports>`".into()));
                }
                let ports = words
                    .map(|w| {
                        w.parse::<usize>()
                            .map_err(|e| parse_err(ln, format!("bad port `{w}`: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if let Some((ln, _)) = lines.next() {
                    return Err(parse_err(ln, "trailing content after codec".into()));
                }
                ports
            }
        };
        Self::custom(encoder, decoder, useful, force)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::hilbert::random_unitary;

    #[test]
    fn fourier_of_one_is_identity() {
        let c = Codec::fourier(1).unwrap();
        assert_eq!(c.encoder(), &DenseOperator::identity(1));
        assert!(c.decoder().max_abs_diff(&DenseOperator::identity(1)) < 1e-15);
    }

    #[test]
    fn fourier_two_is_beamsplitter() {
        let c = Codec::fourier(2).unwrap();
        let h = 0.5f64.sqrt();
        // e^{2πi·1·k/2}: column 0 is (1, −1)/√2, column 1 is (1, 1)/√2.
        let d = c.decoder();
        assert_abs_diff_eq!(d.entry(0, 0).re, h, epsilon = 1e-15);
        assert_abs_diff_eq!(d.entry(1, 0).re, -h, epsilon = 1e-15);
        assert_abs_diff_eq!(d.entry(1, 1).re, h, epsilon = 1e-15);
        let out = d.apply(&c.encoder().apply(&[real(1.0)]).unwrap()).unwrap();
        assert_abs_diff_eq!((out[0] - real(1.0)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1].norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn fourier_four_path_products_are_flat() {
        let c = Codec::fourier(4).unwrap();
        for z in c.path_products(0) {
            assert_abs_diff_eq!(z.norm(), 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn hadamard_four_matches_displayed_signs() {
        let h = hadamard_matrix(4).unwrap();
        let rows = [
            [1., 1., 1., 1.],
            [1., 1., -1., -1.],
            [1., -1., 1., -1.],
            [1., -1., -1., 1.],
        ];
        for (i, row) in rows.iter().enumerate() {
            for (j, &sgn) in row.iter().enumerate() {
                // Source i maps to column i of the encoder.
                assert_eq!(h.entry(j, i), real(sgn / 2.0));
            }
        }
        assert!(h.max_abs_diff(&h.adjoint()) == 0.0);
    }

    #[test]
    fn hadamard_two_and_bad_sizes() {
        let h = hadamard_matrix(2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert_eq!(h.entry(0, 1), real(s));
        assert_eq!(h.entry(1, 1), real(-s));
        assert!(Codec::hadamard(6).is_err());
        assert!(Codec::hadamard(0).is_err());
    }

    #[test]
    fn constructed_codecs_are_optimal() {
        for t in [1, 2, 3, 4, 5, 8, 16] {
            let r = Codec::fourier(t).unwrap().validate();
            assert!(r.faithful && r.optimal, "fourier {t}");
            assert_abs_diff_eq!(r.reduction_factor, 1.0 / t as f64, epsilon = 1e-12);
        }
        for t in [1, 2, 4, 8, 16] {
            let r = Codec::hadamard(t).unwrap().validate();
            assert!(r.faithful && r.optimal, "hadamard {t}");
            assert_abs_diff_eq!(r.reduction_factor, 1.0 / t as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn collective_codecs() {
        let c = Codec::collective_fourier(2, 3).unwrap();
        let r = c.validate();
        assert!(r.faithful && r.optimal);
        assert_abs_diff_eq!(r.reduction_factor, 1.0 / 3.0, epsilon = 1e-12);
        let sq = Codec::collective_fourier(4, 4).unwrap();
        assert!(sq.validate().faithful);
        assert!(sq.encoder().is_unitary());
        assert!(Codec::collective_fourier(4, 3).is_err());
    }

    #[test]
    fn identity_codec_is_faithful_without_reduction() {
        let r = Codec::identity(1).unwrap().validate();
        assert!(r.faithful && r.optimal);
        assert_eq!(r.reduction_factor, 1.0);
    }

    #[test]
    fn multiplexed_codec_offsets_useful_ports() {
        let c = Codec::fourier(3).unwrap().multiplexed(2).unwrap();
        assert_eq!(c.useful_ports(), &[0, 3]);
        assert_eq!((c.s_tot(), c.t_tot()), (2, 6));
        let r = c.validate();
        assert!(r.faithful && r.optimal);
        assert_abs_diff_eq!(r.reduction_factor, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn unfaithful_custom_refused_unless_forced() {
        let enc = DenseOperator::from_fn(2, 1, |_, _| real(0.5f64.sqrt()));
        let dec = DenseOperator::identity(2);
        assert!(matches!(
            Codec::custom(enc.clone(), dec.clone(), vec![0], false),
            Err(Error::Unfaithful(_))
        ));
        let forced = Codec::custom(enc, dec, vec![0], true).unwrap();
        assert!(!forced.validate().faithful);
        let bad = DenseOperator::from_fn(2, 1, |_, _| real(1.0));
        assert!(matches!(
            Codec::custom(bad, DenseOperator::identity(2), vec![0], true),
            Err(Error::NotIsometric(_))
        ));
    }

    #[test]
    fn text_round_trip() {
        for c in [Codec::fourier(3).unwrap(), Codec::collective_fourier(2, 3).unwrap()] {
            let parsed = Codec::from_text(&c.to_text(), false).unwrap();
            assert!(parsed.encoder().max_abs_diff(c.encoder()) < 1e-15);
            assert!(parsed.decoder().max_abs_diff(c.decoder()) < 1e-15);
            assert_eq!(parsed.useful_ports(), c.useful_ports());
            assert_eq!(parsed.kind(), CodecKind::Custom);
        }
    }

    #[test]
    fn text_errors_carry_line_numbers() {
        let err = Codec::from_text("codec 1 2\n0.7 0\n0.7 0 1\n", false).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        assert!(matches!(
            Codec::from_text("matrix 1 1", false),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn faithful_codecs_obey_schwarz_bound(seed in any::<u64>(), t in 1usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dec = random_unitary(t, &mut rng);
            let enc = DenseOperator::from_fn(t, 1, |j, _| dec.entry(0, j).conj());
            let c = Codec::custom(enc, dec, vec![0], false).unwrap();
            let r = c.validate();
            prop_assert!(c.encoder().is_isometry() && c.decoder().is_unitary());
            prop_assert!(r.reduction_factor >= 1.0 / t as f64 - 1e-12);
        }
    }
}
