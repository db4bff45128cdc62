// Copyright 2026 The liethermal Authors
// SPDX-License-Identifier: Apache-2.0

//! Cluster Ising target and the control layout of the driven XX chain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli_algebra::{LieBasis, PauliString};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterIsingParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda: f64,
}

impl ClusterIsingParams {
    pub fn triple(&self) -> [f64; 3] {
        [self.lambda1, self.lambda2, self.lambda3]
    }
}

/// Rescales a nonnegative triple so its components sum to `lambda`.
pub fn normalize_params(raw: [f64; 3], lambda: f64) -> Result<ClusterIsingParams> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameters(format!(
            "lambda scale must be positive, got {lambda}"
        )));
    }
    if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidParameters(format!(
            "couplings must be finite and nonnegative, got {raw:?}"
        )));
    }
    let sum: f64 = raw.iter().sum();
    if sum == 0.0 {
        return Err(Error::InvalidParameters("all-zero coupling triple".into()));
    }
    let s = lambda / sum;
    Ok(ClusterIsingParams {
        lambda1: raw[0] * s,
        lambda2: raw[1] * s,
        lambda3: raw[2] * s,
        lambda,
    })
}

/// Named points of the phase triangle. These are representative of the
/// critical (centre, edges) and non-critical (corners) regimes, not exact
/// coordinates of any published data set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Center,
    EdgeZxx,
    EdgeXxXzx,
    EdgeZXzx,
    CornerZ,
    CornerXx,
    CornerXzx,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::Center,
        Preset::EdgeZxx,
        Preset::EdgeXxXzx,
        Preset::EdgeZXzx,
        Preset::CornerZ,
        Preset::CornerXx,
        Preset::CornerXzx,
    ];

    pub fn triple(self) -> [f64; 3] {
        const THIRD: f64 = 1.0 / 3.0;
        match self {
            Preset::Center => [THIRD, THIRD, THIRD],
            Preset::EdgeZxx => [0.5, 0.5, 0.0],
            Preset::EdgeXxXzx => [0.0, 0.5, 0.5],
            Preset::EdgeZXzx => [0.5, 0.0, 0.5],
            Preset::CornerZ => [1.0, 0.0, 0.0],
            Preset::CornerXx => [0.0, 1.0, 0.0],
            Preset::CornerXzx => [0.0, 0.0, 1.0],
        }
    }

    pub fn is_corner(self) -> bool {
        matches!(self, Preset::CornerZ | Preset::CornerXx | Preset::CornerXzx)
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Center => "p1",
            Preset::EdgeZxx => "edge_z_xx",
            Preset::EdgeXxXzx => "edge_xx_xzx",
            Preset::EdgeZXzx => "edge_z_xzx",
            Preset::CornerZ => "corner_z",
            Preset::CornerXx => "corner_xx",
            Preset::CornerXzx => "corner_xzx",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn params(self, lambda: f64) -> Result<ClusterIsingParams> {
        normalize_params(self.triple(), lambda)
    }
}

/// Coefficient vector of
/// `λ1 Σ Z_j + λ2 Σ X_jX_{j+1} − λ3 (Z_1X_2 + Σ X_{j−1}Z_jX_{j+1} + X_{n−1}Z_n)`.
pub fn cluster_ising_target(
    n: usize,
    params: &ClusterIsingParams,
    basis: &LieBasis,
) -> Result<Vec<f64>> {
    if n < 3 {
        return Err(Error::UnsupportedSize(format!(
            "cluster Ising target needs n >= 3, got {n}"
        )));
    }
    if basis.n() != n {
        return Err(Error::Dimension {
            expected: n,
            found: basis.n(),
        });
    }
    let mut a = vec![0.0; basis.len()];
    let mut add = |p: PauliString, v: f64| -> Result<()> {
        let i = basis
            .index_of(&p)
            .ok_or_else(|| Error::InvalidInput(format!("{p} not in basis")))?;
        a[i] += v;
        Ok(())
    };
    for j in 0..n {
        add(PauliString::z(j, n), params.lambda1)?;
    }
    for j in 0..n - 1 {
        add(PauliString::xx(j, n), params.lambda2)?;
    }
    add(PauliString::from_masks(0b10, 0b01, n), -params.lambda3)?;
    for j in 1..n - 1 {
        let x = (1u64 << (j - 1)) | (1u64 << (j + 1));
        add(PauliString::from_masks(x, 1 << j, n), -params.lambda3)?;
    }
    add(
        PauliString::from_masks(1 << (n - 2), 1 << (n - 1), n),
        -params.lambda3,
    )?;
    Ok(a)
}

/// Controls `Z_1..Z_n, X_1, X_n` and the fixed `g Σ X_jX_{j+1}` drift.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlLayout {
    pub n: usize,
    pub g: f64,
    pub controls: Vec<PauliString>,
    pub drift: Vec<PauliString>,
}

impl ControlLayout {
    pub fn new(n: usize, g: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::UnsupportedSize(format!("control layout needs n >= 2, got {n}")));
        }
        let mut controls: Vec<PauliString> = (0..n).map(|j| PauliString::z(j, n)).collect();
        controls.push(PauliString::x(0, n));
        controls.push(PauliString::x(n - 1, n));
        let drift = (0..n - 1).map(|j| PauliString::xx(j, n)).collect();
        Ok(Self { n, g, controls, drift })
    }

    pub fn channel_count(&self) -> usize {
        self.controls.len()
    }

    pub fn drift_count(&self) -> usize {
        self.drift.len()
    }

    /// Controls followed by drift terms, the order used by the structure tensor.
    pub fn generators(&self) -> Vec<PauliString> {
        self.controls.iter().chain(&self.drift).copied().collect()
    }
}
