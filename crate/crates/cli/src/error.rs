// Copyright 2026 The errfilt Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}: {msg}")]
    ConfigLine { line: usize, msg: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] errfilt::Error),
    #[error("numerical check failed: {0}")]
    Check(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn at(line: Option<usize>, msg: impl Into<String>) -> Self {
        match line {
            Some(line) => Self::ConfigLine { line, msg: msg.into() },
            None => Self::Config(msg.into()),
        }
    }

    /// 2 config, 3 dimension cap, 4 numerical check, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::ConfigLine { .. } | Self::Config(_) => 2,
            Self::Core(e) => match e {
                errfilt::Error::DimensionCap { .. } => 3,
                errfilt::Error::NumericalCheck(_)
                | errfilt::Error::NotIsometric(_)
                | errfilt::Error::NotIdempotent(_)
                | errfilt::Error::NotNormalized(_)
                | errfilt::Error::Unfaithful(_) => 4,
                errfilt::Error::InvalidParameter(_)
                | errfilt::Error::InvalidDecoder(_)
                | errfilt::Error::Parse { .. } => 2,
                _ => 1,
            },
            Self::Check(_) => 4,
            Self::Io(_) | Self::Json(_) | Self::Csv(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
