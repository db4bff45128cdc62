// Copyright 2026 The liethermal Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("unsupported size: {0}")]
    UnsupportedSize(String),

    #[error("unknown generator {0}")]
    UnknownGenerator(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("control layout mismatch: expected {expected} channels, found {found}")]
    Layout { expected: usize, found: usize },

    #[error("non-finite value encountered in {0}")]
    Numeric(String),

    #[error("sweep cache inconsistent with protocol: {0}")]
    Consistency(String),

    #[error("every restart converged to an anti-aligned optimum (c_scale <= 0)")]
    InfeasibleAlignment,

    #[error("degenerate gap {gap:e} below threshold {threshold:e}")]
    DegenerateGap { gap: f64, threshold: f64 },

    #[error("basis hash mismatch: solution has {found}, basis is {expected}")]
    BasisMismatch { expected: String, found: String },
}

pub type Result<T> = std::result::Result<T, Error>;
