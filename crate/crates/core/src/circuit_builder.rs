// Copyright 2026 The liethermal Authors
// SPDX-License-Identifier: Apache-2.0

//! Gate sequence preparing `exp(−βK_0)/Z` with one parity qubit and
//! postselection.
//!
//! Qubit layout: system `S_j = j`, auxiliaries `A_j = n + j`, parity `M = 2n`.
//! `ry` gates follow the usual `RY(θ) = exp(−iθY/2)` convention, so the
//! site rotation `exp(−iϑY)` is stored as `RY(2ϑ)` and the parity rotation
//! `exp(iφY)` as `RY(−2φ)`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    Ry,
    Cx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub gate: GateKind,
    /// Single target, or `[control, target]`.
    pub qubits: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub angle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Postselection {
    pub qubit: usize,
    pub outcome: u8,
    pub predicted_success: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparationCircuit {
    pub n: usize,
    pub beta: f64,
    pub c: Vec<f64>,
    /// Site angles `ϑ_j` with `cos ϑ_j = √((1 − m_j)/2)`.
    pub theta: Vec<f64>,
    /// Parity angle, `tan φ = e^{βc_0}`.
    pub phi: f64,
    pub gates: Vec<Gate>,
    pub postselect: Postselection,
}

/// `P_s = ½(1 − (−1)^n Π_{i=0}^{n} tanh(βc_i))`.
pub fn success_probability(c: &[f64], beta: f64) -> Result<f64> {
    Ok(crate::thermal_sampling::chain_tables(c, beta)?.normalization())
}

/// `ϑ` with `cos ϑ = √((1 − m)/2)`, `m = tanh(x)`; computed from `x`
/// directly so that it stays accurate when `|m| → 1`.
fn site_angle(x: f64) -> f64 {
    // (1 − tanh x)/2 = 1/(1 + e^{2x}), (1 + tanh x)/2 = 1/(1 + e^{−2x}).
    let cos2 = 1.0 / (1.0 + (2.0 * x).exp());
    let sin2 = 1.0 / (1.0 + (-2.0 * x).exp());
    sin2.sqrt().atan2(cos2.sqrt())
}

pub fn build_circuit(c: &[f64], beta: f64) -> Result<PreparationCircuit> {
    let p_s = success_probability(c, beta)?;
    let n = c.len() - 1;
    if n == 0 {
        return Err(Error::InvalidInput("circuit needs at least one site".into()));
    }
    let theta: Vec<f64> = c[1..].iter().map(|&cj| site_angle(beta * cj)).collect();
    let phi = (beta * c[0]).exp().atan();
    let parity = 2 * n;
    let mut gates = Vec::with_capacity(3 * n + 1);
    for (j, &t) in theta.iter().enumerate() {
        gates.push(Gate { gate: GateKind::Ry, qubits: vec![j], angle: Some(2.0 * t) });
    }
    for j in 0..n {
        gates.push(Gate { gate: GateKind::Cx, qubits: vec![j, n + j], angle: None });
    }
    for j in 0..n {
        gates.push(Gate { gate: GateKind::Cx, qubits: vec![j, parity], angle: None });
    }
    gates.push(Gate { gate: GateKind::Ry, qubits: vec![parity], angle: Some(-2.0 * phi) });
    Ok(PreparationCircuit {
        n,
        beta,
        c: c.to_vec(),
        theta,
        phi,
        gates,
        postselect: Postselection {
            qubit: parity,
            outcome: 0,
            predicted_success: p_s,
        },
    })
}

impl PreparationCircuit {
    pub fn qubit_count(&self) -> usize {
        2 * self.n + 1
    }

    pub fn rotation_count(&self) -> usize {
        self.gates.iter().filter(|g| g.gate == GateKind::Ry).count()
    }

    pub fn cnot_count(&self) -> usize {
        self.gates.iter().filter(|g| g.gate == GateKind::Cx).count()
    }

    /// QASM-like listing.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "// system q[0..{}], auxiliary q[{}..{}], parity q[{}]", self.n, self.n, 2 * self.n, 2 * self.n);
        let _ = writeln!(s, "qubits {};", self.qubit_count());
        for g in &self.gates {
            match g.gate {
                GateKind::Ry => {
                    let _ = writeln!(s, "ry({:.17e}) q[{}];", g.angle.unwrap_or(0.0), g.qubits[0]);
                }
                GateKind::Cx => {
                    let _ = writeln!(s, "cx q[{}], q[{}];", g.qubits[0], g.qubits[1]);
                }
            }
        }
        let _ = writeln!(
            s,
            "postselect q[{}] == {}; // P_s = {:.17e}",
            self.postselect.qubit, self.postselect.outcome, self.postselect.predicted_success
        );
        s
    }
}
