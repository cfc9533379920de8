// Copyright 2026 The errfilt Authors
// SPDX-License-Identifier: Apache-2.0

//! Dense complex linear algebra over small labeled tensor-product spaces.
//!
//! A [`LabeledState`] is an amplitude vector over an ordered list of factors.
//! Each factor is either a system factor (a set of channels, or an internal
//! degree of freedom) or an environment register attached to one noise
//! segment. Environment outcome `0` is the undisturbed state; a register is
//! "consumed" once some amplitude has left outcome `0`.
//!
//! Storage is row-major: the last factor varies fastest.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Tolerance for unitarity, hermiticity, idempotence and normalization checks.
pub const TOL: f64 = 1e-12;

/// Eigenvalues below this are rejected; those between it and zero are clipped.
pub const EIGEN_FLOOR: f64 = -1e-10;

/// Default cap on any composite dimension.
pub const DEFAULT_DIM_CAP: usize = 1 << 20;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn real(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `e^{iθ}`
#[inline]
pub fn phase(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    System,
    Env { segment: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Factor {
    pub kind: FactorKind,
    pub dim: usize,
}

impl Factor {
    pub fn system(dim: usize) -> Self {
        Self {
            kind: FactorKind::System,
            dim,
        }
    }

    pub fn env(segment: usize, dim: usize) -> Self {
        Self {
            kind: FactorKind::Env { segment },
            dim,
        }
    }

    pub fn is_env(&self) -> bool {
        matches!(self.kind, FactorKind::Env { .. })
    }
}

/// Label of one basis vector: the index in every system factor, then
/// `(segment, outcome)` for every environment register, in factor order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BasisLabel {
    pub system: Vec<usize>,
    pub env: Vec<(usize, usize)>,
}

/// Kronecker composition with a dimension cap.
pub trait Tensor: Sized {
    fn tensor_capped(&self, other: &Self, cap: usize) -> Result<Self>;

    fn tensor(&self, other: &Self) -> Result<Self> {
        self.tensor_capped(other, DEFAULT_DIM_CAP)
    }
}

fn checked_product(dims: impl IntoIterator<Item = usize>, cap: usize) -> Result<usize> {
    let mut total: usize = 1;
    for d in dims {
        total = total
            .checked_mul(d)
            .ok_or(Error::DimensionCap { dim: usize::MAX, cap })?;
        if total > cap {
            return Err(Error::DimensionCap { dim: total, cap });
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Operators
// ---------------------------------------------------------------------------

/// A dense complex matrix acting between two finite spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    m: DMatrix<C64>,
}

impl DenseOperator {
    pub fn new(m: DMatrix<C64>) -> Self {
        Self { m }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self {
            m: DMatrix::from_fn(rows, cols, f),
        }
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[C64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self {
            m: DMatrix::from_row_slice(rows, cols, data),
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            m: DMatrix::identity(n, n),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            m: DMatrix::zeros(rows, cols),
        }
    }

    /// Diagonal operator with the given entries.
    pub fn diagonal(entries: &[C64]) -> Self {
        let n = entries.len();
        Self::from_fn(n, n, |r, c| if r == c { entries[r] } else { C64::new(0.0, 0.0) })
    }

    /// Orthogonal projector onto the listed basis indices of an `n`-dim space.
    pub fn projector_onto(n: usize, indices: &[usize]) -> Result<Self> {
        let mut m = DMatrix::zeros(n, n);
        for &i in indices {
            if i >= n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: i + 1,
                });
            }
            m[(i, i)] = real(1.0);
        }
        Ok(Self { m })
    }

    /// Rectangular map keeping only the listed basis indices, in order.
    /// Row `r` of the result reads input index `indices[r]`.
    pub fn selector(n: usize, indices: &[usize]) -> Result<Self> {
        let mut m = DMatrix::zeros(indices.len(), n);
        for (r, &i) in indices.iter().enumerate() {
            if i >= n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: i + 1,
                });
            }
            m[(r, i)] = real(1.0);
        }
        Ok(Self { m })
    }

    pub fn rows(&self) -> usize {
        self.m.nrows()
    }

    pub fn cols(&self) -> usize {
        self.m.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    #[inline]
    pub fn entry(&self, r: usize, c: usize) -> C64 {
        self.m[(r, c)]
    }

    pub fn adjoint(&self) -> Self {
        Self { m: self.m.adjoint() }
    }

    /// Entrywise complex conjugate (no transpose).
    pub fn conj(&self) -> Self {
        Self {
            m: self.m.map(|z| z.conj()),
        }
    }

    pub fn compose(&self, rhs: &Self) -> Result<Self> {
        if self.cols() != rhs.rows() {
            return Err(Error::DimensionMismatch {
                expected: self.cols(),
                got: rhs.rows(),
            });
        }
        Ok(Self { m: &self.m * &rhs.m })
    }

    pub fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.cols(),
                got: v.len(),
            });
        }
        let mut out = vec![C64::new(0.0, 0.0); self.rows()];
        for (r, o) in out.iter_mut().enumerate() {
            for (c, x) in v.iter().enumerate() {
                *o += self.m[(r, c)] * x;
            }
        }
        Ok(out)
    }

    /// Largest entry of `|O†O − I|`.
    pub fn isometry_deviation(&self) -> f64 {
        let g = self.m.adjoint() * &self.m;
        max_abs_diff_identity(&g)
    }

    pub fn is_isometry(&self) -> bool {
        self.isometry_deviation() <= TOL
    }

    pub fn is_unitary(&self) -> bool {
        self.rows() == self.cols() && self.is_isometry()
    }

    /// Largest entry of `|P² − P|`; infinite for non-square operators.
    pub fn idempotence_deviation(&self) -> f64 {
        if self.rows() != self.cols() {
            return f64::INFINITY;
        }
        let sq = &self.m * &self.m;
        (sq - &self.m).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.m.shape() != other.m.shape() {
            return f64::INFINITY;
        }
        (&self.m - &other.m).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Direct sum `self ⊕ other` (block diagonal).
    pub fn direct_sum(&self, other: &Self) -> Self {
        let (r1, c1) = self.m.shape();
        let (r2, c2) = other.m.shape();
        let mut m = DMatrix::zeros(r1 + r2, c1 + c2);
        m.view_mut((0, 0), (r1, c1)).copy_from(&self.m);
        m.view_mut((r1, c1), (r2, c2)).copy_from(&other.m);
        Self { m }
    }
}

impl Tensor for DenseOperator {
    fn tensor_capped(&self, other: &Self, cap: usize) -> Result<Self> {
        checked_product([self.rows(), other.rows()], cap)?;
        checked_product([self.cols(), other.cols()], cap)?;
        Ok(Self {
            m: self.m.kronecker(&other.m),
        })
    }
}

fn max_abs_diff_identity(g: &DMatrix<C64>) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..g.nrows() {
        for c in 0..g.ncols() {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((g[(r, c)] - real(target)).norm());
        }
    }
    worst
}

/// Haar-random unitary of dimension `n` (QR of a complex Gaussian matrix
/// with the diagonal phases of R absorbed).
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DenseOperator {
    let g = DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64(re, im)
    });
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for c in 0..n {
        let d = r[(c, c)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { real(1.0) };
        for row in 0..n {
            q[(row, c)] *= ph;
        }
    }
    DenseOperator::new(q)
}

/// Random normalized vector, uniform on the unit sphere of `C^n`.
pub fn random_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    let mut v: Vec<C64> = (0..n)
        .map(|_| c64(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in &mut v {
        *z /= norm;
    }
    v
}

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

/// Amplitude vector over a labeled tensor basis (system factors and
/// environment registers).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledState {
    factors: Vec<Factor>,
    consumed: Vec<bool>,
    amps: Vec<C64>,
}

impl LabeledState {
    pub fn new(factors: Vec<Factor>, amps: Vec<C64>) -> Result<Self> {
        Self::new_capped(factors, amps, DEFAULT_DIM_CAP)
    }

    pub fn new_capped(factors: Vec<Factor>, amps: Vec<C64>, cap: usize) -> Result<Self> {
        let dim = checked_product(factors.iter().map(|f| f.dim), cap)?;
        if amps.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: amps.len(),
            });
        }
        let mut segments: Vec<usize> = factors
            .iter()
            .filter_map(|f| match f.kind {
                FactorKind::Env { segment } => Some(segment),
                FactorKind::System => None,
            })
            .collect();
        let n_env = segments.len();
        segments.sort_unstable();
        segments.dedup();
        if segments.len() != n_env {
            return Err(Error::InvalidParameter(
                "environment segment ids must be distinct".into(),
            ));
        }
        let mut state = Self {
            consumed: vec![false; factors.len()],
            factors,
            amps,
        };
        let strides = state.strides();
        for (f, factor) in state.factors.iter().enumerate() {
            if factor.is_env() {
                state.consumed[f] = state
                    .amps
                    .iter()
                    .enumerate()
                    .any(|(i, a)| a.norm_sqr() > 0.0 && !(i / strides[f]).is_multiple_of(factor.dim));
            }
        }
        Ok(state)
    }

    /// A state on a single system factor.
    pub fn from_system_amplitudes(amps: &[C64]) -> Self {
        Self {
            factors: vec![Factor::system(amps.len())],
            consumed: vec![false],
            amps: amps.to_vec(),
        }
    }

    /// Basis vector with the given index in every factor.
    pub fn basis(factors: Vec<Factor>, indices: &[usize]) -> Result<Self> {
        if indices.len() != factors.len() {
            return Err(Error::DimensionMismatch {
                expected: factors.len(),
                got: indices.len(),
            });
        }
        let dim = checked_product(factors.iter().map(|f| f.dim), DEFAULT_DIM_CAP)?;
        let mut flat = 0;
        for (f, &i) in factors.iter().zip(indices) {
            if i >= f.dim {
                return Err(Error::DimensionMismatch {
                    expected: f.dim,
                    got: i + 1,
                });
            }
            flat = flat * f.dim + i;
        }
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[flat] = real(1.0);
        Self::new(factors, amps)
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            factors: self.factors.clone(),
            consumed: self.consumed.clone(),
            amps: self.amps.iter().map(|a| a * s).collect(),
        }
    }

    /// Product of the system factor dimensions.
    pub fn system_dim(&self) -> usize {
        self.factors.iter().filter(|f| !f.is_env()).map(|f| f.dim).product()
    }

    pub fn env_factor(&self, segment: usize) -> Result<usize> {
        self.factors
            .iter()
            .position(|f| f.kind == FactorKind::Env { segment })
            .ok_or(Error::UnknownRegister(segment))
    }

    pub fn is_consumed(&self, segment: usize) -> Result<bool> {
        Ok(self.consumed[self.env_factor(segment)?])
    }

    pub(crate) fn mark_consumed(&mut self, factor: usize) {
        self.consumed[factor] = true;
    }

    pub(crate) fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.factors.len()];
        for f in (0..self.factors.len().saturating_sub(1)).rev() {
            strides[f] = strides[f + 1] * self.factors[f + 1].dim;
        }
        strides
    }

    pub(crate) fn amps_mut(&mut self) -> &mut Vec<C64> {
        &mut self.amps
    }

    /// Appends a fresh environment register in its undisturbed state.
    pub fn with_env(&self, segment: usize, dim: usize, cap: usize) -> Result<Self> {
        if self.env_factor(segment).is_ok() {
            return Err(Error::InvalidParameter(format!(
                "segment {segment} already has a register"
            )));
        }
        let new_dim = checked_product([self.dim(), dim], cap)?;
        let mut amps = vec![C64::new(0.0, 0.0); new_dim];
        for (i, a) in self.amps.iter().enumerate() {
            amps[i * dim] = *a;
        }
        let mut factors = self.factors.clone();
        factors.push(Factor::env(segment, dim));
        let mut consumed = self.consumed.clone();
        consumed.push(false);
        Ok(Self {
            factors,
            consumed,
            amps,
        })
    }

    pub fn label_of(&self, flat: usize) -> BasisLabel {
        let strides = self.strides();
        let mut label = BasisLabel {
            system: Vec::new(),
            env: Vec::new(),
        };
        for (f, factor) in self.factors.iter().enumerate() {
            let digit = (flat / strides[f]) % factor.dim;
            match factor.kind {
                FactorKind::System => label.system.push(digit),
                FactorKind::Env { segment } => label.env.push((segment, digit)),
            }
        }
        label
    }

    pub fn index_of(&self, label: &BasisLabel) -> Result<usize> {
        let strides = self.strides();
        let (mut s, mut e) = (0, 0);
        let mut flat = 0;
        for (f, factor) in self.factors.iter().enumerate() {
            let digit = match factor.kind {
                FactorKind::System => {
                    let d = *label.system.get(s).ok_or(Error::DimensionMismatch {
                        expected: s + 1,
                        got: label.system.len(),
                    })?;
                    s += 1;
                    d
                }
                FactorKind::Env { segment } => {
                    let (seg, d) = *label.env.get(e).ok_or(Error::DimensionMismatch {
                        expected: e + 1,
                        got: label.env.len(),
                    })?;
                    if seg != segment {
                        return Err(Error::UnknownRegister(seg));
                    }
                    e += 1;
                    d
                }
            };
            if digit >= factor.dim {
                return Err(Error::DimensionMismatch {
                    expected: factor.dim,
                    got: digit + 1,
                });
            }
            flat += digit * strides[f];
        }
        if s != label.system.len() || e != label.env.len() {
            return Err(Error::DimensionMismatch {
                expected: s + e,
                got: label.system.len() + label.env.len(),
            });
        }
        Ok(flat)
    }

    pub fn amplitude(&self, label: &BasisLabel) -> Result<C64> {
        Ok(self.amps[self.index_of(label)?])
    }

    /// Applies `op` (possibly rectangular) to one system factor.
    pub fn apply_local(&self, factor: usize, op: &DenseOperator) -> Result<Self> {
        let f = self.factors.get(factor).ok_or(Error::NotSystemFactor(factor))?;
        if f.is_env() {
            return Err(Error::NotSystemFactor(factor));
        }
        if op.cols() != f.dim {
            return Err(Error::DimensionMismatch {
                expected: f.dim,
                got: op.cols(),
            });
        }
        let d_in = f.dim;
        let d_out = op.rows();
        let right: usize = self.factors[factor + 1..].iter().map(|f| f.dim).product();
        let left: usize = self.factors[..factor].iter().map(|f| f.dim).product();
        let zero = C64::new(0.0, 0.0);
        let mut out = vec![zero; left * d_out * right];
        let m = op.matrix();
        for l in 0..left {
            let in_base = l * d_in * right;
            let out_base = l * d_out * right;
            for i in 0..d_in {
                for o in 0..d_out {
                    let coeff = m[(o, i)];
                    if coeff == zero {
                        continue;
                    }
                    let src = &self.amps[in_base + i * right..in_base + (i + 1) * right];
                    let dst = &mut out[out_base + o * right..out_base + (o + 1) * right];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += coeff * s;
                    }
                }
            }
        }
        let mut factors = self.factors.clone();
        factors[factor].dim = d_out;
        Ok(Self {
            factors,
            consumed: self.consumed.clone(),
            amps: out,
        })
    }

    /// Projects one system factor. Returns the unnormalized projected state
    /// and its squared norm.
    pub fn project(&self, factor: usize, projector: &DenseOperator) -> Result<(Self, f64)> {
        let dev = projector.idempotence_deviation();
        if dev > TOL {
            return Err(Error::NotIdempotent(dev));
        }
        let out = self.apply_local(factor, projector)?;
        let p = out.norm_sqr();
        Ok((out, p))
    }

    fn split_index(&self, flat: usize, strides: &[usize]) -> (usize, usize) {
        let (mut sys, mut env) = (0, 0);
        for (f, factor) in self.factors.iter().enumerate() {
            let digit = (flat / strides[f]) % factor.dim;
            if factor.is_env() {
                env = env * factor.dim + digit;
            } else {
                sys = sys * factor.dim + digit;
            }
        }
        (sys, env)
    }

    /// Reduced density matrix of the system factors (in factor order).
    pub fn partial_trace_env(&self) -> Result<DensityMatrix> {
        if !self.factors.iter().any(|f| f.is_env()) {
            return Err(Error::NoEnvironment);
        }
        let sys_dim = self.system_dim();
        let env_dim = self.dim() / sys_dim;
        let strides = self.strides();
        let mut coeffs = DMatrix::<C64>::zeros(sys_dim, env_dim);
        for (flat, a) in self.amps.iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            let (s, e) = self.split_index(flat, &strides);
            coeffs[(s, e)] = *a;
        }
        Ok(DensityMatrix::from_matrix_unchecked(&coeffs * coeffs.adjoint()))
    }

    /// System amplitudes on the branch where every environment register is
    /// undisturbed.
    pub fn undisturbed_component(&self) -> Vec<C64> {
        let strides = self.strides();
        let mut out = vec![C64::new(0.0, 0.0); self.system_dim()];
        for (flat, a) in self.amps.iter().enumerate() {
            let untouched = self
                .factors
                .iter()
                .enumerate()
                .all(|(f, factor)| !factor.is_env() || (flat / strides[f]).is_multiple_of(factor.dim));
            if untouched {
                let (s, _) = self.split_index(flat, &strides);
                out[s] = *a;
            }
        }
        out
    }
}

impl Tensor for LabeledState {
    fn tensor_capped(&self, other: &Self, cap: usize) -> Result<Self> {
        let dim = checked_product([self.dim(), other.dim()], cap)?;
        let mut amps = Vec::with_capacity(dim);
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        Self::new_capped(factors, amps, cap)
    }
}

// ---------------------------------------------------------------------------
// Density matrices
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validates hermiticity, trace and positivity.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let herm = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > TOL {
            return Err(Error::NumericalCheck(format!(
                "density matrix not Hermitian (deviation {herm:e})"
            )));
        }
        let rho = Self { m };
        let tr = rho.trace();
        if tr > 1.0 + TOL {
            return Err(Error::NumericalCheck(format!("trace {tr} exceeds 1")));
        }
        let min = rho.raw_eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min < EIGEN_FLOOR {
            return Err(Error::NumericalCheck(format!("negative eigenvalue {min:e}")));
        }
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(m: DMatrix<C64>) -> Self {
        Self { m }
    }

    pub fn from_pure(v: &[C64]) -> Self {
        let n = v.len();
        Self {
            m: DMatrix::from_fn(n, n, |r, c| v[r] * v[c].conj()),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    #[inline]
    pub fn entry(&self, r: usize, c: usize) -> C64 {
        self.m[(r, c)]
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    fn raw_eigenvalues(&self) -> Vec<f64> {
        self.m.clone().symmetric_eigen().eigenvalues.iter().copied().collect()
    }

    /// Eigenvalues in ascending order, with roundoff negatives clipped to 0.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .raw_eigenvalues()
            .into_iter()
            .map(|x| if (EIGEN_FLOOR..0.0).contains(&x) { 0.0 } else { x })
            .collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// Rescaled to unit trace.
    pub fn normalized(&self) -> Result<Self> {
        let tr = self.trace();
        if tr <= 0.0 {
            return Err(Error::NumericalCheck("cannot normalize zero trace".into()));
        }
        Ok(Self {
            m: self.m.map(|z| z / tr),
        })
    }

    /// `⟨v|ρ|v⟩`
    pub fn expectation(&self, v: &[C64]) -> Result<C64> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..v.len() {
            for c in 0..v.len() {
                acc += v[r].conj() * self.m[(r, c)] * v[c];
            }
        }
        Ok(acc)
    }

    /// `O ρ O†`, unvalidated.
    pub fn conjugated(&self, op: &DenseOperator) -> Result<Self> {
        if op.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: op.cols(),
            });
        }
        Ok(Self {
            m: op.matrix() * &self.m * op.matrix().adjoint(),
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        (&self.m - &other.m).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// `Tr(ρ |ψ⟩⟨ψ|)` for a normalized system-only target.
pub fn fidelity(rho: &DensityMatrix, target: &LabeledState) -> Result<f64> {
    if target.factors().iter().any(|f| f.is_env()) {
        return Err(Error::InvalidParameter(
            "fidelity target must not carry environment registers".into(),
        ));
    }
    fidelity_with_vector(rho, target.amplitudes())
}

pub fn fidelity_with_vector(rho: &DensityMatrix, target: &[C64]) -> Result<f64> {
    let n: f64 = target.iter().map(|z| z.norm_sqr()).sum();
    if (n - 1.0).abs() > TOL {
        return Err(Error::NotNormalized(n));
    }
    let f = rho.expectation(target)?.re;
    Ok(f.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_tensor_identity() {
        let id6 = DenseOperator::identity(2).tensor(&DenseOperator::identity(3)).unwrap();
        assert_eq!(id6, DenseOperator::identity(6));
    }

    #[test]
    fn basis_tensor_env_lands_on_combined_label() {
        let sys = LabeledState::basis(vec![Factor::system(3)], &[1]).unwrap();
        let env = LabeledState::basis(vec![Factor::env(0, 4)], &[0]).unwrap();
        let joint = sys.tensor(&env).unwrap();
        let label = BasisLabel {
            system: vec![1],
            env: vec![(0, 0)],
        };
        assert_eq!(joint.amplitude(&label).unwrap(), real(1.0));
        assert_abs_diff_eq!(joint.norm_sqr(), 1.0);
        assert_eq!(joint.label_of(joint.index_of(&label).unwrap()), label);
    }

    #[test]
    fn kronecker_amplitudes_hand_expanded() {
        let (a, b) = (c64(0.6, 0.0), c64(0.0, 0.8));
        let q = LabeledState::from_system_amplitudes(&[a, b]);
        let e = LabeledState::from_system_amplitudes(&[real(1.0), real(0.0)]);
        let j = q.tensor(&e).unwrap();
        assert_eq!(j.amplitudes(), &[a, real(0.0), b, real(0.0)]);
    }

    #[test]
    fn tensor_respects_cap() {
        let a = LabeledState::from_system_amplitudes(&vec![real(0.0); 1024]);
        let err = a.tensor_capped(&a, 1 << 19).unwrap_err();
        assert!(matches!(err, Error::DimensionCap { .. }));
        let big = DenseOperator::identity(2048);
        assert!(big.tensor(&big).is_err());
    }

    #[test]
    fn duplicate_segments_rejected() {
        let e = LabeledState::basis(vec![Factor::env(3, 2)], &[0]).unwrap();
        assert!(e.tensor(&e).is_err());
    }

    #[test]
    fn partial_trace_of_product_state_is_pure() {
        let psi = [c64(0.6, 0.0), c64(0.0, 0.8)];
        let s = LabeledState::from_system_amplitudes(&psi)
            .with_env(0, 3, DEFAULT_DIM_CAP)
            .unwrap();
        let rho = s.partial_trace_env().unwrap();
        let expect = DensityMatrix::from_pure(&psi);
        assert!(rho.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn partial_trace_of_maximal_dephasing() {
        let h = 1.0 / 2f64.sqrt();
        let factors = vec![Factor::system(2), Factor::env(0, 2)];
        let s = LabeledState::new(factors, vec![real(h), real(0.0), real(0.0), real(h)]).unwrap();
        assert!(s.is_consumed(0).unwrap());
        let rho = s.partial_trace_env().unwrap();
        assert_abs_diff_eq!(rho.entry(0, 0).re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.entry(1, 1).re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.entry(0, 1).norm(), 0.0);
    }

    #[test]
    fn partial_trace_needs_env() {
        let s = LabeledState::from_system_amplitudes(&[real(1.0)]);
        assert_eq!(s.partial_trace_env().unwrap_err(), Error::NoEnvironment);
    }

    #[test]
    fn fidelity_of_pure_and_mixed() {
        let psi = [c64(0.6, 0.0), c64(0.0, 0.8)];
        let rho = DensityMatrix::from_pure(&psi);
        assert_abs_diff_eq!(fidelity_with_vector(&rho, &psi).unwrap(), 1.0, epsilon = 1e-15);

        let m = 5;
        let mixed = DensityMatrix::new(DMatrix::from_fn(m, m, |r, c| {
            if r == c {
                real(1.0 / m as f64)
            } else {
                real(0.0)
            }
        }))
        .unwrap();
        let target = random_state(m, &mut ChaCha8Rng::seed_from_u64(3));
        assert_abs_diff_eq!(fidelity_with_vector(&mixed, &target).unwrap(), 0.2, epsilon = 1e-14);
    }

    #[test]
    fn fidelity_of_dephased_bell_pair() {
        // p P_psi + (1-p)/m Σ P_jj for m = 2, p = 0.8, assembled entry by entry.
        let (p, h) = (0.8, 0.5);
        let mut m = DMatrix::<C64>::zeros(4, 4);
        for &(r, c) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
            m[(r, c)] += real(p * h);
        }
        m[(0, 0)] += real((1.0 - p) / 2.0);
        m[(3, 3)] += real((1.0 - p) / 2.0);
        let rho = DensityMatrix::new(m).unwrap();
        let bell = [real(h.sqrt()), real(0.0), real(0.0), real(h.sqrt())];
        assert_abs_diff_eq!(fidelity_with_vector(&rho, &bell).unwrap(), 0.9, epsilon = 1e-15);
    }

    #[test]
    fn fidelity_rejects_unnormalized_target() {
        let rho = DensityMatrix::from_pure(&[real(1.0), real(0.0)]);
        assert!(matches!(
            fidelity_with_vector(&rho, &[real(1.0), real(1.0)]),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn density_matrix_validation() {
        let bad = DMatrix::from_row_slice(2, 2, &[real(0.5), real(0.3), real(0.0), real(0.5)]);
        assert!(DensityMatrix::new(bad).is_err());
        let neg = DMatrix::from_row_slice(2, 2, &[real(1.2), real(0.0), real(0.0), real(-0.2)]);
        assert!(DensityMatrix::new(neg).is_err());
    }

    #[test]
    fn project_rejects_non_idempotent() {
        let s = LabeledState::from_system_amplitudes(&[real(1.0), real(0.0)]);
        let op = DenseOperator::diagonal(&[real(0.5), real(1.0)]);
        assert!(matches!(s.project(0, &op), Err(Error::NotIdempotent(_))));
    }

    #[test]
    fn project_keeps_listed_channels() {
        let h = 0.5;
        let s = LabeledState::from_system_amplitudes(&[real(h), real(h), real(h), real(h)]);
        let p = DenseOperator::projector_onto(4, &[0, 1]).unwrap();
        let (out, prob) = s.project(0, &p).unwrap();
        assert_abs_diff_eq!(prob, 0.5, epsilon = 1e-15);
        assert_eq!(out.amplitudes()[3], real(0.0));
    }

    #[test]
    fn apply_local_on_middle_factor() {
        let factors = vec![Factor::system(2), Factor::system(3), Factor::env(0, 2)];
        let s = LabeledState::basis(factors, &[1, 2, 0]).unwrap();
        let shift = DenseOperator::from_fn(3, 3, |r, c| if r == (c + 1) % 3 { real(1.0) } else { real(0.0) });
        let out = s.apply_local(1, &shift).unwrap();
        let label = BasisLabel {
            system: vec![1, 0],
            env: vec![(0, 0)],
        };
        assert_eq!(out.amplitude(&label).unwrap(), real(1.0));
        assert!(matches!(s.apply_local(2, &shift), Err(Error::NotSystemFactor(2))));
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 5, 16] {
            assert!(random_unitary(n, &mut rng).is_unitary());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn unitary_evolution_preserves_norm(seed in any::<u64>(), n in 1usize..=64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_unitary(n, &mut rng);
            let psi = LabeledState::from_system_amplitudes(&random_state(n, &mut rng));
            let out = psi.apply_local(0, &u).unwrap();
            prop_assert!((out.norm_sqr() - 1.0).abs() <= TOL);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn traced_unitary_dilation_has_unit_trace(seed in any::<u64>(), s in 1usize..=6, e in 1usize..=6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let joint = LabeledState::new(
                vec![Factor::system(s * e)],
                random_state(s * e, &mut rng),
            ).unwrap();
            let u = random_unitary(s * e, &mut rng);
            let evolved = joint.apply_local(0, &u).unwrap();
            let split = LabeledState::new(
                vec![Factor::system(s), Factor::env(0, e)],
                evolved.amplitudes().to_vec(),
            ).unwrap();
            let rho = split.partial_trace_env().unwrap();
            prop_assert!((rho.trace() - 1.0).abs() <= TOL);
        }

        #[test]
        fn fidelity_ignores_global_phase(seed in any::<u64>(), n in 1usize..=8, theta in 0.0..std::f64::consts::TAU) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho = DensityMatrix::from_pure(&random_state(n, &mut rng));
            let target = random_state(n, &mut rng);
            let rotated: Vec<C64> = target.iter().map(|z| z * phase(theta)).collect();
            let f1 = fidelity_with_vector(&rho, &target).unwrap();
            let f2 = fidelity_with_vector(&rho, &rotated).unwrap();
            prop_assert!((f1 - f2).abs() <= TOL);
        }

        #[test]
        fn projected_norm_is_expectation(seed in any::<u64>(), n in 1usize..=16) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let psi = random_state(n, &mut rng);
            // Projector onto a random subspace: U diag(0/1) U†.
            let u = random_unitary(n, &mut rng);
            let keep: Vec<C64> = (0..n).map(|i| real(((seed >> (i % 64)) & 1) as f64)).collect();
            let p = u.compose(&DenseOperator::diagonal(&keep)).unwrap().compose(&u.adjoint()).unwrap();
            let (_, prob) = LabeledState::from_system_amplitudes(&psi).project(0, &p).unwrap();
            let direct = DensityMatrix::from_pure(&psi);
            let expect: C64 = (0..n).flat_map(|r| (0..n).map(move |c| (r, c)))
                .map(|(r, c)| p.entry(c, r) * direct.entry(r, c))
                .sum();
            prop_assert!((prob - expect.re).abs() <= 1e-11);
        }
    }
}
