// Copyright 2026 The liethermal Authors
// SPDX-License-Identifier: Apache-2.0

//! Dense small-`n` oracle: operators in the computational basis, thermal
//! states, the ground-state bound, propagation and circuit cross-checks.
//!
//! Basis states are indexed with site 1 as the most significant bit and
//! `|0⟩ ↔ z = +1`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit_builder::{GateKind, PreparationCircuit};
use crate::control::{operator_infidelity, InitialCondition};
use crate::dynamics::Protocol;
use crate::error::{Error, Result};
use crate::models::ControlLayout;
use crate::pauli_algebra::{LieBasis, PauliString};

pub type CMatrix = DMatrix<Complex64>;

/// Largest chain realised densely.
pub const DENSE_MAX_SITES: usize = 12;
/// Largest chain for the per-slice dense propagation check.
pub const PROPAGATION_MAX_SITES: usize = 5;
/// Largest register for the circuit statevector simulation.
pub const CIRCUIT_MAX_QUBITS: usize = 13;

const I_POW: [Complex64; 4] = [
    Complex64::new(1.0, 0.0),
    Complex64::new(0.0, 1.0),
    Complex64::new(-1.0, 0.0),
    Complex64::new(0.0, -1.0),
];

fn check_sites(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        return Err(Error::UnsupportedSize(format!("dense evaluation limited to n <= {cap}, got {n}")));
    }
    Ok(())
}

/// Site masks in state-index bit order.
fn index_masks(p: &PauliString) -> (usize, usize) {
    let n = p.n();
    let flip = |m: u64| (0..n).filter(|j| (m >> j) & 1 == 1).fold(0usize, |acc, j| acc | 1 << (n - 1 - j));
    (flip(p.x_mask()), flip(p.z_mask()))
}

/// `P|b⟩ = i^{#Y} (−1)^{|z∧b|} |b ⊕ x⟩`, returned as `(b ⊕ x, phase)`.
fn pauli_column(xs: usize, zs: usize, ys: u32, b: usize) -> (usize, Complex64) {
    let k = (ys + 2 * (zs & b).count_ones()) % 4;
    (b ^ xs, I_POW[k as usize])
}

pub fn pauli_dense(p: &PauliString) -> Result<CMatrix> {
    check_sites(p.n(), DENSE_MAX_SITES)?;
    let dim = 1usize << p.n();
    let (xs, zs) = index_masks(p);
    let mut m = CMatrix::zeros(dim, dim);
    for b in 0..dim {
        let (r, ph) = pauli_column(xs, zs, p.y_count(), b);
        m[(r, b)] = ph;
    }
    Ok(m)
}

/// Hermitian operator on `n` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    pub n: usize,
    pub matrix: CMatrix,
}

impl DenseOperator {
    pub fn hermiticity_defect(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

/// `K = Σ_l a_l b_l`.
pub fn realize_dense(a: &[f64], basis: &LieBasis) -> Result<DenseOperator> {
    let n = basis.n();
    check_sites(n, DENSE_MAX_SITES)?;
    if a.len() != basis.len() {
        return Err(Error::Dimension { expected: basis.len(), found: a.len() });
    }
    let dim = 1usize << n;
    let mut m = CMatrix::zeros(dim, dim);
    for (p, &al) in basis.elements().iter().zip(a) {
        if al == 0.0 {
            continue;
        }
        let (xs, zs) = index_masks(p);
        for b in 0..dim {
            let (r, ph) = pauli_column(xs, zs, p.y_count(), b);
            m[(r, b)] += ph * al;
        }
    }
    Ok(DenseOperator { n, matrix: m })
}

/// `a_l = tr(K b_l) / 2^n`.
pub fn project(op: &CMatrix, basis: &LieBasis) -> Result<Vec<f64>> {
    let n = basis.n();
    let dim = 1usize << n;
    if op.nrows() != dim || op.ncols() != dim {
        return Err(Error::Dimension { expected: dim, found: op.nrows() });
    }
    Ok(basis
        .elements()
        .iter()
        .map(|p| {
            let (xs, zs) = index_masks(p);
            let tr: Complex64 = (0..dim)
                .map(|b| {
                    let (r, ph) = pauli_column(xs, zs, p.y_count(), b);
                    op[(b, r)] * ph
                })
                .sum();
            tr.re / dim as f64
        })
        .collect())
}

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    (values, vectors)
}

/// `V f(λ) V†`.
fn spectral_map(values: &[f64], vectors: &CMatrix, f: impl Fn(f64) -> Complex64) -> CMatrix {
    let weights = DVector::from_iterator(values.len(), values.iter().map(|&v| f(v)));
    let mut scaled = vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= weights[j];
    }
    scaled * vectors.adjoint()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalState {
    pub beta: f64,
    pub matrix: CMatrix,
}

/// `exp(−β(K − E_min))` normalised to unit trace.
pub fn thermal_state(k: &DenseOperator, beta: f64) -> Result<ThermalState> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidInput(format!("beta must be finite and nonnegative, got {beta}")));
    }
    let (values, vectors) = hermitian_eigen(&k.matrix);
    let e0 = values[0];
    let z: f64 = values.iter().map(|&v| (-beta * (v - e0)).exp()).sum();
    let matrix = spectral_map(&values, &vectors, |v| Complex64::new((-beta * (v - e0)).exp() / z, 0.0));
    Ok(ThermalState { beta, matrix })
}

fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    a.iter().zip(b.transpose().iter()).map(|(x, y)| x * y).sum()
}

/// `1 − tr(ρσ)/√(tr ρ² tr σ²)`.
pub fn state_infidelity(rho: &CMatrix, sigma: &CMatrix) -> Result<f64> {
    if rho.shape() != sigma.shape() {
        return Err(Error::Dimension { expected: rho.nrows(), found: sigma.nrows() });
    }
    let rs = trace_product(rho, sigma).re;
    let rr = trace_product(rho, rho).re;
    let ss = trace_product(sigma, sigma).re;
    Ok(1.0 - rs / (rr * ss).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundStateBound {
    /// `(⟨Ψ|K_T|Ψ⟩ − E_0)/(E_1 − E_0)`, `Ψ` the ground state of `K(t_f)`.
    pub bound: f64,
    /// `1 − |⟨Ψ|φ_0⟩|²`, `φ_0` the ground state of `K_T`.
    pub ground_state_infidelity: f64,
    pub gap: f64,
}

/// Relative gap below which the target's ground state counts as degenerate.
pub const GAP_FLOOR: f64 = 1e-10;

pub fn ground_state_bound(a_f: &[f64], a_t: &[f64], basis: &LieBasis) -> Result<GroundStateBound> {
    let kf = realize_dense(a_f, basis)?;
    let kt = realize_dense(a_t, basis)?;
    let (vt, wt) = hermitian_eigen(&kt.matrix);
    if vt.len() < 2 {
        return Err(Error::InvalidInput("need at least two levels".into()));
    }
    let scale = vt[0].abs().max(vt[vt.len() - 1].abs());
    let gap = vt[1] - vt[0];
    let threshold = GAP_FLOOR * scale;
    if !(gap > threshold) {
        return Err(Error::DegenerateGap { gap, threshold });
    }
    let (_, wf) = hermitian_eigen(&kf.matrix);
    // Expand Ψ in the target eigenbasis: both quantities become sums of
    // nonnegative terms over the excited levels, free of cancellation.
    let amps = wt.adjoint() * wf.column(0);
    let weights: Vec<f64> = amps.iter().map(|a| a.norm_sqr()).collect();
    let bound = weights[1..].iter().zip(&vt[1..]).map(|(w, e)| w * (e - vt[0])).sum::<f64>() / gap;
    Ok(GroundStateBound {
        bound,
        ground_state_infidelity: weights[1..].iter().sum(),
        gap,
    })
}

/// `Σ_k u_k g_k` over the controls followed by `g` on every drift term.
pub fn dense_hamiltonian(layout: &ControlLayout, controls: &[f64]) -> Result<CMatrix> {
    if controls.len() != layout.channel_count() {
        return Err(Error::Layout { expected: layout.channel_count(), found: controls.len() });
    }
    check_sites(layout.n, DENSE_MAX_SITES)?;
    let dim = 1usize << layout.n;
    let mut h = CMatrix::zeros(dim, dim);
    let amps = controls.iter().copied().chain(std::iter::repeat(layout.g));
    for (p, amp) in layout.generators().iter().zip(amps) {
        if amp != 0.0 {
            h += pauli_dense(p)? * Complex64::new(amp, 0.0);
        }
    }
    Ok(h)
}

/// `U = Π_m exp(−i H_m τ_m)`, latest slice leftmost.
pub fn dense_propagator(protocol: &Protocol, n: usize) -> Result<CMatrix> {
    check_sites(n, PROPAGATION_MAX_SITES)?;
    let layout = ControlLayout::new(n, protocol.g)?;
    let dim = 1usize << n;
    let mut u = CMatrix::identity(dim, dim);
    for m in 0..protocol.slices() {
        let h = dense_hamiltonian(&layout, protocol.row(m))?;
        let (values, vectors) = hermitian_eigen(&h);
        let tau = protocol.tau[m];
        let step = spectral_map(&values, &vectors, |v| Complex64::from_polar(1.0, -v * tau));
        u = step * u;
    }
    Ok(u)
}

/// `max_l |a_l^{dense} − a_l^{ode}|` for `K(t_f) = U K_0 U†`.
pub fn dense_propagate_check(
    c: &InitialCondition,
    protocol: &Protocol,
    basis: &LieBasis,
    a_ode: &[f64],
) -> Result<f64> {
    let n = basis.n();
    check_sites(n, PROPAGATION_MAX_SITES)?;
    let a0 = c.coefficients(basis)?;
    let k0 = realize_dense(&a0, basis)?;
    let u = dense_propagator(protocol, n)?;
    let kf = &u * &k0.matrix * u.adjoint();
    let a_dense = project(&kf, basis)?;
    if a_dense.len() != a_ode.len() {
        return Err(Error::Dimension { expected: a_dense.len(), found: a_ode.len() });
    }
    Ok(a_dense.iter().zip(a_ode).fold(0.0, |m, (x, y)| m.max((x - y).abs())))
}

/// Infidelity between `U ρ_0 U†` and the thermal state of the propagated
/// parent Hamiltonian `Σ a_l b_l`.
pub fn conjugation_infidelity(
    c: &InitialCondition,
    protocol: &Protocol,
    basis: &LieBasis,
    a_ode: &[f64],
    beta: f64,
) -> Result<f64> {
    let n = basis.n();
    let a0 = c.coefficients(basis)?;
    let rho0 = thermal_state(&realize_dense(&a0, basis)?, beta)?;
    let u = dense_propagator(protocol, n)?;
    let evolved = &u * &rho0.matrix * u.adjoint();
    let target = thermal_state(&realize_dense(a_ode, basis)?, beta)?;
    state_infidelity(&evolved, &target.matrix)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitSimulation {
    /// Postselected state of the system register, renormalised.
    pub reduced: CMatrix,
    pub success_probability: f64,
}

/// Statevector run from `|0…0⟩`, tracing out the auxiliaries and
/// postselecting the parity qubit.
pub fn simulate_circuit(circuit: &PreparationCircuit) -> Result<CircuitSimulation> {
    let n = circuit.n;
    let q = circuit.qubit_count();
    if q > CIRCUIT_MAX_QUBITS {
        return Err(Error::UnsupportedSize(format!(
            "circuit simulation limited to {CIRCUIT_MAX_QUBITS} qubits, got {q}"
        )));
    }
    let bit = |qubit: usize| 1usize << (q - 1 - qubit);
    let mut psi = vec![0.0f64; 1 << q];
    psi[0] = 1.0;
    for g in &circuit.gates {
        if g.qubits.iter().any(|&k| k >= q) {
            return Err(Error::InvalidInput(format!("gate on qubit outside 0..{q}")));
        }
        match g.gate {
            GateKind::Ry => {
                let half = 0.5 * g.angle.unwrap_or(0.0);
                let (s, c) = half.sin_cos();
                let mask = bit(g.qubits[0]);
                for i in 0..psi.len() {
                    if i & mask == 0 {
                        let (a0, a1) = (psi[i], psi[i | mask]);
                        psi[i] = c * a0 - s * a1;
                        psi[i | mask] = s * a0 + c * a1;
                    }
                }
            }
            GateKind::Cx => {
                let (cm, tm) = (bit(g.qubits[0]), bit(g.qubits[1]));
                for i in 0..psi.len() {
                    if i & cm != 0 && i & tm == 0 {
                        psi.swap(i, i | tm);
                    }
                }
            }
        }
    }
    let post = circuit.postselect.qubit;
    let want = if circuit.postselect.outcome == 0 { 0 } else { bit(post) };
    // Registers: system bits on top, then auxiliaries, then the parity qubit.
    let dim_s = 1usize << n;
    let mut reduced = DMatrix::<f64>::zeros(dim_s, dim_s);
    let mut p_s = 0.0;
    let rest = q - n;
    for s in 0..dim_s {
        for s2 in 0..dim_s {
            let mut acc = 0.0;
            for r in 0..1usize << rest {
                if r & bit(post) != want {
                    continue;
                }
                acc += psi[(s << rest) | r] * psi[(s2 << rest) | r];
            }
            reduced[(s, s2)] = acc;
        }
        p_s += reduced[(s, s)];
    }
    if !(p_s > 0.0) {
        return Err(Error::Numeric("postselection has zero probability".into()));
    }
    Ok(CircuitSimulation {
        reduced: reduced.map(|v| Complex64::new(v / p_s, 0.0)),
        success_probability: p_s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPoint {
    pub lambda_beta: f64,
    pub state_infidelity: f64,
    pub operator_infidelity: f64,
}

/// State infidelity between the thermal states of `Σ a_f b` and `Σ a_T b`
/// over `λβ ∈ grid`.
pub fn beta_curve(
    a_f: &[f64],
    a_t: &[f64],
    basis: &LieBasis,
    lambda: f64,
    lambda_betas: &[f64],
) -> Result<Vec<BetaPoint>> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput("energy scale must be positive".into()));
    }
    let j = operator_infidelity(a_f, a_t, a_f.iter().map(|v| v * v).sum::<f64>().sqrt())?;
    let kf = realize_dense(a_f, basis)?;
    let kt = realize_dense(a_t, basis)?;
    let (vf, wf) = hermitian_eigen(&kf.matrix);
    let (vt, wt) = hermitian_eigen(&kt.matrix);
    let gibbs = |values: &[f64], vectors: &CMatrix, beta: f64| {
        let e0 = values[0];
        let z: f64 = values.iter().map(|&v| (-beta * (v - e0)).exp()).sum();
        spectral_map(values, vectors, |v| Complex64::new((-beta * (v - e0)).exp() / z, 0.0))
    };
    lambda_betas
        .iter()
        .map(|&lb| {
            let beta = lb / lambda;
            let si = state_infidelity(&gibbs(&vf, &wf, beta), &gibbs(&vt, &wt, beta))?;
            Ok(BetaPoint { lambda_beta: lb, state_infidelity: si, operator_infidelity: j })
        })
        .collect()
}

/// `AB − BA`.
pub fn commutator_dense(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.norm()))
}

/// Pure-state density matrix `|ψ⟩⟨ψ|`.
pub fn pure_state(psi: &[Complex64]) -> CMatrix {
    let v = DVector::from_column_slice(psi);
    &v * v.adjoint()
}
