// Copyright 2026 The errfilt Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("composite dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("environment register for segment {0} already consumed")]
    RegisterConsumed(usize),

    #[error("no environment register for segment {0}")]
    UnknownRegister(usize),

    #[error("factor {0} is not a system factor")]
    NotSystemFactor(usize),

    #[error("state has no environment register")]
    NoEnvironment,

    #[error("operator is not idempotent (deviation {0:e})")]
    NotIdempotent(f64),

    #[error("operator is not an isometry (deviation {0:e})")]
    NotIsometric(f64),

    #[error("target state is not normalized (norm squared {0})")]
    NotNormalized(f64),

    #[error("codec is not faithful (deviation {0:e})")]
    Unfaithful(f64),

    #[error("invalid decoder pair: {0}")]
    InvalidDecoder(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical check failed: {0}")]
    NumericalCheck(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
