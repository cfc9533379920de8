// Copyright 2026 The errfilt Authors
// SPDX-License-Identifier: Apache-2.0

pub mod classical;
pub mod codec;
pub mod error;
pub mod filtration;
pub mod hilbert;
pub mod montecarlo;
pub mod noise;
pub mod purification;
pub mod reproduce;

pub use error::{Error, Result};
