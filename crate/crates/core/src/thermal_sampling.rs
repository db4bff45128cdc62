// Copyright 2026 The liethermal Authors
// SPDX-License-Identifier: Apache-2.0

//! Exact autoregressive sampling from `exp(−βK_0)/Z` for
//! `K_0 = c_0 Z_1…Z_n + Σ_j c_j Z_j`.
//!
//! Bit convention: `|0⟩ ↔ z = +1`, site 1 is the most significant bit of a
//! basis-state index. Every factor `Q(m, z) = (1 − m z)/2` is held in log
//! form with `log|m|` and `sign(m)` kept apart, so the long tanh products
//! stay accurate for large `nβ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2: f64 = std::f64::consts::LN_2;

/// Largest chain enumerated by [`exact_distribution`].
pub const EXACT_MAX_SITES: usize = 20;

/// `m = s · e^{l}` with `s ∈ {−1, 0, 1}` and `l ≤ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LogMag {
    sign: f64,
    log_abs: f64,
}

impl LogMag {
    fn tanh(x: f64) -> Self {
        if x == 0.0 {
            return Self { sign: 0.0, log_abs: f64::NEG_INFINITY };
        }
        let e = (-2.0 * x.abs()).exp();
        Self {
            sign: x.signum(),
            log_abs: (-e).ln_1p() - e.ln_1p(),
        }
    }

    fn mul(self, other: Self) -> Self {
        Self {
            sign: self.sign * other.sign,
            log_abs: self.log_abs + other.log_abs,
        }
    }

    fn neg(self) -> Self {
        Self { sign: -self.sign, ..self }
    }

    fn value(self) -> f64 {
        self.sign * self.log_abs.exp()
    }

    /// `ln Q(m, z) = ln((1 − m z)/2)`.
    fn ln_q(self, z: i8) -> f64 {
        if self.sign == 0.0 {
            return -LN_2;
        }
        if self.sign * f64::from(z) < 0.0 {
            self.log_abs.exp().ln_1p() - LN_2
        } else {
            (-self.log_abs.exp_m1()).ln() - LN_2
        }
    }
}

/// `Q(m, z) = (1 − m z)/2`.
pub fn q(m: f64, z: i8) -> f64 {
    0.5 * (1.0 - m * f64::from(z))
}

/// Precomputed per-site factors of the chain Gibbs distribution.
#[derive(Debug, Clone)]
pub struct ChainTables {
    beta: f64,
    c: Vec<f64>,
    /// `m_j = tanh(β c_j)`, `j = 0..=n`.
    m: Vec<LogMag>,
    /// `m_0^{(j)} = (−1)^{n−j} m_0 Π_{i>j} m_i`, `j = 0..=n`.
    m0_prefix: Vec<LogMag>,
    ln_norm: f64,
}

/// Tables for coefficients `c = (c_0, c_1, …, c_n)`.
pub fn chain_tables(c: &[f64], beta: f64) -> Result<ChainTables> {
    if c.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need c_0 and at least one site coefficient, got {} values",
            c.len()
        )));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidInput(format!("beta must be finite and nonnegative, got {beta}")));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("coefficients must be finite".into()));
    }
    let n = c.len() - 1;
    let m: Vec<LogMag> = c.iter().map(|&ci| LogMag::tanh(beta * ci)).collect();
    let mut m0_prefix = vec![m[0]; n + 1];
    for j in (0..n).rev() {
        m0_prefix[j] = m0_prefix[j + 1].mul(m[j + 1]).neg();
    }
    let ln_norm = m0_prefix[0].ln_q(1);
    Ok(ChainTables {
        beta,
        c: c.to_vec(),
        m,
        m0_prefix,
        ln_norm,
    })
}

impl ChainTables {
    pub fn n(&self) -> usize {
        self.c.len() - 1
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.c
    }

    /// `m_j = tanh(β c_j)`.
    pub fn m(&self, j: usize) -> f64 {
        self.m[j].value()
    }

    pub fn m0_prefix(&self, j: usize) -> f64 {
        self.m0_prefix[j].value()
    }

    /// `N_β = ½(1 − (−1)^n Π_{i=0}^{n} m_i)`.
    pub fn normalization(&self) -> f64 {
        self.ln_norm.exp()
    }

    /// `ln p(z_1, …, z_j)` for a prefix of length `j ≤ n`.
    pub fn ln_marginal(&self, prefix: &[i8]) -> Result<f64> {
        check_spins(prefix, self.n())?;
        let mut parity = 1i8;
        let mut acc = -self.ln_norm;
        for (i, &z) in prefix.iter().enumerate() {
            acc += self.m[i + 1].ln_q(z);
            parity *= z;
        }
        Ok(acc + self.m0_prefix[prefix.len()].ln_q(parity))
    }

    pub fn marginal(&self, prefix: &[i8]) -> Result<f64> {
        self.ln_marginal(prefix).map(f64::exp)
    }

    /// Eigenvalue of `K_0` on a full spin string.
    pub fn energy(&self, z: &[i8]) -> f64 {
        let parity: i8 = z.iter().product();
        self.c[0] * f64::from(parity)
            + z.iter().zip(&self.c[1..]).map(|(&zi, ci)| ci * f64::from(zi)).sum::<f64>()
    }
}

fn check_spins(z: &[i8], n: usize) -> Result<()> {
    if z.len() > n {
        return Err(Error::InvalidInput(format!("prefix of length {} exceeds n = {n}", z.len())));
    }
    if let Some(bad) = z.iter().find(|v| **v != 1 && **v != -1) {
        return Err(Error::InvalidInput(format!("spin values must be ±1, got {bad}")));
    }
    Ok(())
}

/// `p(z_{j+1} | z_1 … z_j)`.
pub fn conditional_probability(tables: &ChainTables, prefix: &[i8], candidate: i8) -> Result<f64> {
    if prefix.len() >= tables.n() {
        return Err(Error::InvalidInput(format!(
            "prefix of length {} leaves no site to draw",
            prefix.len()
        )));
    }
    check_spins(&[candidate], 1)?;
    let mut ext = prefix.to_vec();
    ext.push(candidate);
    let num = tables.ln_marginal(&ext)?;
    let den = tables.ln_marginal(prefix)?;
    Ok((num - den).exp())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinSample {
    pub z: Vec<i8>,
    /// `Π_j z_j`.
    pub z0: i8,
}

impl SpinSample {
    pub fn new(z: Vec<i8>) -> Self {
        let z0 = z.iter().product();
        Self { z, z0 }
    }

    /// Basis-state index with site 1 as the most significant bit.
    pub fn index(&self) -> usize {
        self.z.iter().fold(0, |acc, &zi| (acc << 1) | usize::from(zi < 0))
    }
}

/// Draws `z_1` from its marginal, then each `z_{j+1}` from its conditional.
pub fn draw_sample<R: Rng + ?Sized>(tables: &ChainTables, rng: &mut R) -> SpinSample {
    let n = tables.n();
    let mut z = Vec::with_capacity(n);
    let mut parity = 1i8;
    let mut ln_prefix = 0.0;
    let mut site_sum = -tables.ln_norm;
    for j in 0..n {
        // ln p(z⃗_j, +1) from the running site sum.
        let ln_plus = site_sum + tables.m[j + 1].ln_q(1) + tables.m0_prefix[j + 1].ln_q(parity);
        let p_plus = (ln_plus - ln_prefix).exp();
        let zj = if rng.random::<f64>() < p_plus { 1 } else { -1 };
        site_sum += tables.m[j + 1].ln_q(zj);
        parity *= zj;
        ln_prefix = site_sum + tables.m0_prefix[j + 1].ln_q(parity);
        z.push(zj);
    }
    SpinSample::new(z)
}

/// `count` samples from stream `stream` of `seed`.
pub fn draw_samples(tables: &ChainTables, count: usize, seed: u64, stream: u64) -> Vec<SpinSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..count).map(|_| draw_sample(tables, &mut rng)).collect()
}

/// Full Gibbs distribution over `2^n` strings, indexed with site 1 as the MSB.
pub fn exact_distribution(c: &[f64], beta: f64) -> Result<Vec<f64>> {
    let tables = chain_tables(c, beta)?;
    let n = tables.n();
    if n > EXACT_MAX_SITES {
        return Err(Error::UnsupportedSize(format!(
            "exact enumeration limited to n <= {EXACT_MAX_SITES}, got {n}"
        )));
    }
    let ln_plus: Vec<f64> = (1..=n).map(|j| tables.m[j].ln_q(1)).collect();
    let ln_minus: Vec<f64> = (1..=n).map(|j| tables.m[j].ln_q(-1)).collect();
    let parity_ln = [tables.m[0].ln_q(1), tables.m[0].ln_q(-1)];
    Ok((0..1usize << n)
        .map(|idx| {
            let mut acc = -tables.ln_norm;
            for j in 0..n {
                acc += if (idx >> (n - 1 - j)) & 1 == 0 { ln_plus[j] } else { ln_minus[j] };
            }
            acc += parity_ln[(idx.count_ones() & 1) as usize];
            acc.exp()
        })
        .collect())
}

/// `Σ |p − q| / 2`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Empirical distribution of a sample set over `2^n` strings.
pub fn empirical_distribution(samples: &[SpinSample], n: usize) -> Vec<f64> {
    let mut counts = vec![0.0; 1 << n];
    for s in samples {
        counts[s.index()] += 1.0;
    }
    let total = samples.len().max(1) as f64;
    counts.iter_mut().for_each(|c| *c /= total);
    counts
}
