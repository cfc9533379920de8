// Copyright 2026 The errfilt Authors
// SPDX-License-Identifier: Apache-2.0

//! Command-line front end: config parsing, execution and table output.

pub mod config;
pub mod error;
pub mod execute;
pub mod output;

pub use config::{parse_config, Command, Format, RunConfig};
pub use error::{CliError, CliResult};
