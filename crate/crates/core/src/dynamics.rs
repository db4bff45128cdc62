// Copyright 2026 The liethermal Authors
// SPDX-License-Identifier: Apache-2.0

//! Coefficient-vector propagation under piecewise-constant controls.
//!
//! Within slice `m` the coefficient vector obeys `ȧ = G_m a` with
//! `G_m = Σ_k h_{k,m} Λ_k + g Σ_drift Λ_drift`, a sparse real antisymmetric
//! matrix, so each slice is an orthogonal map `U_m = exp(τ_m G_m)`.
//!
//! Three backends evaluate `exp(τG) v`:
//!
//! * [`ExpBackend::Taylor`]: truncated Taylor series on substeps with
//!   `‖δG‖₁ ≤ 1`. The polynomial actually applied is recorded, which lets
//!   [`adjoint_gradient`] return the exact gradient of the computed map.
//! * [`ExpBackend::Krylov`]: skew-Lanczos projection with an a-posteriori
//!   error estimate and step halving.
//! * [`ExpBackend::Dense`]: full matrix exponential, for `d <= 400`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ControlLayout;
use crate::pauli_algebra::{structure_tensor, LieBasis, StructureTensor};

/// Default relative tolerance of the exponential action.
pub const DEFAULT_EXP_TOL: f64 = 1e-12;
/// Largest `d` accepted by the dense backend.
pub const DENSE_EXP_MAX_DIM: usize = 400;

const TAYLOR_MAX_TERMS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: vec![0; dim + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted = triplets.to_vec();
        sorted.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0; dim + 1];
        let mut cols = Vec::with_capacity(sorted.len());
        let mut vals: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            cols.push(c);
            vals.push(v);
            last = Some((r, c));
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { dim, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        (self.row_ptr[r]..self.row_ptr[r + 1])
            .find(|&e| self.cols[e] == c)
            .map_or(0.0, |e| self.vals[e])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |e| (r, self.cols[e], self.vals[e]))
        })
    }

    /// `y = scale · A x`.
    pub fn matvec_scaled(&self, x: &[f64], scale: f64, y: &mut [f64]) {
        for r in 0..self.dim {
            let mut acc = 0.0;
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[e] * x[self.cols[e]];
            }
            y[r] = scale * acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.matvec_scaled(x, 1.0, &mut y);
        y
    }

    /// Max absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let mut sums = vec![0.0; self.dim];
        for (&c, v) in self.cols.iter().zip(&self.vals) {
            sums[c] += v.abs();
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// Largest `|A + Aᵀ|` entry.
    pub fn antisymmetry_defect(&self) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v + self.get(c, r)).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.vals.iter().all(|v| v.is_finite())
    }
}

/// Basis, layout and structure tensor of one chain, plus the fixed sparsity
/// pattern shared by every slice generator.
#[derive(Debug, Clone)]
pub struct ControlSystem {
    layout: ControlLayout,
    tensor: StructureTensor,
    pattern: SparseMatrix,
    /// Per nonzero of `pattern`: generator index and structure constant.
    entry_source: Vec<(usize, f64)>,
}

impl ControlSystem {
    pub fn new(basis: &LieBasis, layout: ControlLayout) -> Result<Self> {
        if layout.n != basis.n() {
            return Err(Error::Dimension {
                expected: basis.n(),
                found: layout.n,
            });
        }
        let tensor = structure_tensor(basis, &layout.generators())?;
        let d = basis.len();
        // Distinct generators map a column to distinct rows, so entries
        // never collide and each nonzero has exactly one source.
        let mut trip: Vec<(usize, usize, usize, f64)> = Vec::new();
        for (k, act) in tensor.actions().iter().enumerate() {
            for &(l, j, v) in &act.entries {
                trip.push((l, j, k, v));
            }
        }
        trip.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0; d + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut entry_source = Vec::with_capacity(trip.len());
        for w in trip.windows(2) {
            debug_assert!((w[0].0, w[0].1) != (w[1].0, w[1].1));
        }
        for &(l, j, k, v) in &trip {
            row_ptr[l + 1] += 1;
            cols.push(j);
            entry_source.push((k, v));
        }
        for r in 0..d {
            row_ptr[r + 1] += row_ptr[r];
        }
        let pattern = SparseMatrix {
            dim: d,
            row_ptr,
            vals: vec![0.0; cols.len()],
            cols,
        };
        Ok(Self {
            layout,
            tensor,
            pattern,
            entry_source,
        })
    }

    pub fn from_chain(basis: &LieBasis, g: f64) -> Result<Self> {
        Self::new(basis, ControlLayout::new(basis.n(), g)?)
    }

    pub fn layout(&self) -> &ControlLayout {
        &self.layout
    }

    pub fn tensor(&self) -> &StructureTensor {
        &self.tensor
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim
    }

    pub fn channels(&self) -> usize {
        self.layout.channel_count()
    }

    /// Fills the generator for one slice into `out`, which must share the
    /// pattern (as produced by [`ControlSystem::empty_generator`]).
    fn fill_generator(&self, controls: &[f64], g: f64, out: &mut SparseMatrix) {
        let nc = self.channels();
        for (v, &(k, lam)) in out.vals.iter_mut().zip(&self.entry_source) {
            let amp = if k < nc { controls[k] } else { g };
            *v = amp * lam;
        }
    }

    pub fn empty_generator(&self) -> SparseMatrix {
        self.pattern.clone()
    }
}

/// `G = Σ_k h_k Λ_k + g Σ_drift Λ_drift` for one slice.
pub fn assemble_generator(
    slice_controls: &[f64],
    g: f64,
    system: &ControlSystem,
) -> Result<SparseMatrix> {
    if slice_controls.len() != system.channels() {
        return Err(Error::Layout {
            expected: system.channels(),
            found: slice_controls.len(),
        });
    }
    let mut out = system.empty_generator();
    system.fill_generator(slice_controls, g, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExpBackend {
    #[default]
    Taylor,
    Krylov,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpOptions {
    pub backend: ExpBackend,
    pub tol: f64,
}

impl Default for ExpOptions {
    fn default() -> Self {
        Self {
            backend: ExpBackend::Taylor,
            tol: DEFAULT_EXP_TOL,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn check_finite(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(what.into()))
    }
}

/// Number of Taylor substeps for `exp(τG)`.
fn taylor_substeps(g: &SparseMatrix, tau: f64) -> usize {
    let x = tau.abs() * g.norm_one();
    (x.ceil() as usize).max(1)
}

/// `out = Σ_{p≤P} (δG)^p x / p!`, stopping once two consecutive terms fall
/// below `tol` relative to the partial sum. Returns `P`.
fn taylor_apply(
    g: &SparseMatrix,
    delta: f64,
    x: &[f64],
    out: &mut [f64],
    term: &mut Vec<f64>,
    scratch: &mut Vec<f64>,
    tol: f64,
) -> usize {
    out.copy_from_slice(x);
    term.clear();
    term.extend_from_slice(x);
    scratch.resize(x.len(), 0.0);
    let mut small = 0;
    for p in 1..=TAYLOR_MAX_TERMS {
        g.matvec_scaled(term, delta / p as f64, scratch);
        std::mem::swap(term, scratch);
        for (o, t) in out.iter_mut().zip(term.iter()) {
            *o += t;
        }
        if norm_inf(term) <= tol * norm_inf(out) {
            small += 1;
            if small == 2 {
                return p;
            }
        } else {
            small = 0;
        }
    }
    TAYLOR_MAX_TERMS
}

fn taylor_tol(tol: f64) -> f64 {
    // The series is cheap to run to round-off; gradients rely on it.
    tol.min(f64::EPSILON)
}

fn exp_action_taylor(g: &SparseMatrix, tau: f64, v: &[f64], tol: f64) -> Vec<f64> {
    let s = taylor_substeps(g, tau);
    let delta = tau / s as f64;
    let mut cur = v.to_vec();
    let mut next = vec![0.0; v.len()];
    let (mut t1, mut t2) = (Vec::new(), Vec::new());
    for _ in 0..s {
        taylor_apply(g, delta, &cur, &mut next, &mut t1, &mut t2, taylor_tol(tol));
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

fn exp_action_dense(g: &SparseMatrix, tau: f64, v: &[f64]) -> Result<Vec<f64>> {
    if g.dim() > DENSE_EXP_MAX_DIM {
        return Err(Error::UnsupportedSize(format!(
            "dense exponential limited to d <= {DENSE_EXP_MAX_DIM}, got {}",
            g.dim()
        )));
    }
    let m = (g.to_dense() * tau).exp();
    let x = nalgebra::DVector::from_column_slice(v);
    Ok((m * x).as_slice().to_vec())
}

/// Skew-Lanczos: `A V_m = V_m H_m + β_m v_{m+1} e_mᵀ` with `H_m` skew
/// tridiagonal. Full reorthogonalisation keeps the basis orthonormal.
fn exp_action_krylov(g: &SparseMatrix, tau: f64, v: &[f64], tol: f64) -> Result<Vec<f64>> {
    let d = g.dim();
    let max_m = d.clamp(1, 40);
    let total_norm = norm(v);
    if total_norm == 0.0 || tau == 0.0 || g.nnz() == 0 {
        return Ok(v.to_vec());
    }
    let mut w = v.to_vec();
    let mut t_done = 0.0;
    let mut step = tau;
    while (tau - t_done).abs() > 0.0 {
        let beta0 = norm(&w);
        if beta0 == 0.0 {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![w.iter().map(|x| x / beta0).collect()];
        let mut betas: Vec<f64> = Vec::new();
        let mut breakdown = false;
        while basis.len() < max_m {
            let j = basis.len() - 1;
            let mut next = g.matvec(&basis[j]);
            if j > 0 {
                let b = betas[j - 1];
                for (x, y) in next.iter_mut().zip(&basis[j - 1]) {
                    *x += b * y;
                }
            }
            for q in &basis {
                let c = dot(&next, q);
                for (x, y) in next.iter_mut().zip(q) {
                    *x -= c * y;
                }
            }
            let b = norm(&next);
            betas.push(b);
            if b <= 1e-14 * g.norm_one().max(1.0) {
                breakdown = true;
                break;
            }
            basis.push(next.into_iter().map(|x| x / b).collect());
        }
        let m = basis.len();
        let build_h = || {
            let mut h = DMatrix::<f64>::zeros(m, m);
            for j in 0..m.saturating_sub(1) {
                h[(j + 1, j)] = betas[j];
                h[(j, j + 1)] = -betas[j];
            }
            h
        };
        let h = build_h();
        let beta_m = if breakdown { 0.0 } else { betas.get(m - 1).copied().unwrap_or(0.0) };
        let remaining = tau - t_done;
        step = if step.abs() > remaining.abs() { remaining } else { step };
        loop {
            let e = (h.clone() * step).exp();
            let err = beta0 * beta_m * e[(m - 1, 0)].abs();
            let budget = tol * total_norm * (step / tau).abs();
            if err <= budget || breakdown || step.abs() < 1e-14 * tau.abs() {
                let mut out = vec![0.0; d];
                for (j, q) in basis.iter().enumerate() {
                    let c = beta0 * e[(j, 0)];
                    for (o, x) in out.iter_mut().zip(q) {
                        *o += c * x;
                    }
                }
                w = out;
                t_done += step;
                if err < 0.1 * budget {
                    step *= 2.0;
                }
                break;
            }
            step *= 0.5;
        }
        if (t_done - tau).abs() <= 1e-15 * tau.abs() {
            break;
        }
    }
    Ok(w)
}

/// `exp(τG) v` to relative accuracy `tol`.
pub fn exp_action(
    g: &SparseMatrix,
    tau: f64,
    v: &[f64],
    opts: ExpOptions,
) -> Result<Vec<f64>> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if v.len() != g.dim() {
        return Err(Error::Dimension {
            expected: g.dim(),
            found: v.len(),
        });
    }
    if !tau.is_finite() || !g.is_finite() {
        return Err(Error::Numeric("exp_action inputs".into()));
    }
    check_finite("exp_action vector", v)?;
    let out = match opts.backend {
        ExpBackend::Taylor => exp_action_taylor(g, tau, v, opts.tol),
        ExpBackend::Krylov => exp_action_krylov(g, tau, v, opts.tol)?,
        ExpBackend::Dense => exp_action_dense(g, tau, v)?,
    };
    check_finite("exp_action result", &out)?;
    Ok(out)
}

/// Piecewise-constant protocol: `h` is row-major `M × channels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub tau: Vec<f64>,
    pub h: Vec<f64>,
    pub channels: usize,
    pub g: f64,
}

impl Protocol {
    pub fn uniform(t_f: f64, slices: usize, channels: usize, g: f64) -> Result<Self> {
        if slices == 0 || !(t_f > 0.0) {
            return Err(Error::InvalidInput(format!(
                "need slices >= 1 and t_f > 0, got {slices} and {t_f}"
            )));
        }
        Ok(Self {
            tau: vec![t_f / slices as f64; slices],
            h: vec![0.0; slices * channels],
            channels,
            g,
        })
    }

    pub fn slices(&self) -> usize {
        self.tau.len()
    }

    pub fn total_time(&self) -> f64 {
        self.tau.iter().sum()
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.h[m * self.channels..(m + 1) * self.channels]
    }

    pub fn row_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.h[m * self.channels..(m + 1) * self.channels]
    }

    pub fn max_amplitude(&self) -> f64 {
        norm_inf(&self.h)
    }

    pub fn validate(&self, system: &ControlSystem) -> Result<()> {
        if self.channels != system.channels() {
            return Err(Error::Layout {
                expected: system.channels(),
                found: self.channels,
            });
        }
        if self.h.len() != self.tau.len() * self.channels {
            return Err(Error::InvalidInput(format!(
                "{} amplitudes for {} slices of {} channels",
                self.h.len(),
                self.tau.len(),
                self.channels
            )));
        }
        if self.tau.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::InvalidInput("slice durations must be finite and >= 0".into()));
        }
        check_finite("protocol amplitudes", &self.h)?;
        if !self.g.is_finite() {
            return Err(Error::Numeric("drift amplitude".into()));
        }
        Ok(())
    }

    /// Concatenation in time; both parts must share channels and `g`.
    pub fn concat(&self, later: &Protocol) -> Result<Protocol> {
        if self.channels != later.channels || self.g != later.g {
            return Err(Error::InvalidInput("protocols differ in layout or drift".into()));
        }
        let mut out = self.clone();
        out.tau.extend_from_slice(&later.tau);
        out.h.extend_from_slice(&later.h);
        Ok(out)
    }

    /// Slices in reverse order with all amplitudes (including `g`) negated;
    /// undoes the forward evolution.
    pub fn reversed_negated(&self) -> Protocol {
        let mut out = self.clone();
        out.tau.reverse();
        out.h.clear();
        for m in (0..self.slices()).rev() {
            out.h.extend(self.row(m).iter().map(|v| -v));
        }
        out.g = -self.g;
        out
    }
}

fn check_vec(system: &ControlSystem, v: &[f64]) -> Result<()> {
    if v.len() != system.dim() {
        return Err(Error::Dimension {
            expected: system.dim(),
            found: v.len(),
        });
    }
    Ok(())
}

/// `a(t_f) = U_M … U_1 a(0)`; with `trajectory` the slice boundaries
/// `a_0..a_M` are returned as well.
pub fn propagate_with(
    a0: &[f64],
    protocol: &Protocol,
    system: &ControlSystem,
    opts: ExpOptions,
    trajectory: bool,
) -> Result<(Vec<f64>, Option<Vec<Vec<f64>>>)> {
    check_vec(system, a0)?;
    protocol.validate(system)?;
    let mut gen = system.empty_generator();
    let mut cur = a0.to_vec();
    let mut traj = trajectory.then(|| vec![cur.clone()]);
    for m in 0..protocol.slices() {
        system.fill_generator(protocol.row(m), protocol.g, &mut gen);
        cur = exp_action(&gen, protocol.tau[m], &cur, opts)?;
        if let Some(t) = traj.as_mut() {
            t.push(cur.clone());
        }
    }
    Ok((cur, traj))
}

pub fn propagate(a0: &[f64], protocol: &Protocol, system: &ControlSystem) -> Result<Vec<f64>> {
    propagate_with(a0, protocol, system, ExpOptions::default(), false).map(|r| r.0)
}

/// Forward states `a_m` and backward co-states `b_{m+1}` of one protocol.
#[derive(Debug, Clone)]
pub struct SweepCache {
    /// `forward[m] = U_m … U_1 a(0)`, `m = 0..=M`.
    pub forward: Vec<Vec<f64>>,
    /// `backward[m] = (a_Tᵀ U_M … U_{m+1})ᵀ`, `m = 0..=M`; `backward[M] = a_T`.
    pub backward: Vec<Vec<f64>>,
    /// `‖a(0)‖`.
    pub v: f64,
    /// `‖a_T‖`.
    pub a: f64,
    /// `a_T · a(t_f)`.
    pub f: f64,
}

impl SweepCache {
    pub fn slices(&self) -> usize {
        self.forward.len() - 1
    }

    pub fn final_state(&self) -> &[f64] {
        self.forward.last().unwrap()
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.forward[0]
    }

    /// Spread of `b_{m+1} · a_m` over the sweep.
    pub fn consistency_defect(&self) -> f64 {
        let vals: Vec<f64> = self
            .forward
            .iter()
            .zip(&self.backward)
            .map(|(a, b)| dot(a, b))
            .collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }
}

pub fn forward_backward_with(
    a0: &[f64],
    a_t: &[f64],
    protocol: &Protocol,
    system: &ControlSystem,
    opts: ExpOptions,
) -> Result<SweepCache> {
    check_vec(system, a_t)?;
    let (_, traj) = propagate_with(a0, protocol, system, opts, true)?;
    let forward = traj.expect("trajectory requested");
    let m_total = protocol.slices();
    let mut backward = vec![Vec::new(); m_total + 1];
    backward[m_total] = a_t.to_vec();
    let mut gen = system.empty_generator();
    for m in (0..m_total).rev() {
        // Uᵀ = exp(-τG) for antisymmetric G.
        system.fill_generator(protocol.row(m), protocol.g, &mut gen);
        backward[m] = exp_action(&gen, -protocol.tau[m], &backward[m + 1], opts)?;
    }
    let f = dot(a_t, forward.last().unwrap());
    Ok(SweepCache {
        v: norm(a0),
        a: norm(a_t),
        f,
        forward,
        backward,
    })
}

pub fn forward_backward(
    a0: &[f64],
    a_t: &[f64],
    protocol: &Protocol,
    system: &ControlSystem,
) -> Result<SweepCache> {
    forward_backward_with(a0, a_t, protocol, system, ExpOptions::default())
}

/// Value and exact gradient of `F = a_T · a(t_f)` for the Taylor-propagated
/// map: the derivative of the applied polynomial, not of the true exponential.
#[derive(Debug, Clone)]
pub struct AdjointResult {
    pub f: f64,
    pub final_state: Vec<f64>,
    /// `∂F/∂h`, row-major `M × channels`.
    pub grad_h: Vec<f64>,
    /// `(a_Tᵀ U_M … U_1)ᵀ`, i.e. `∂F/∂a(0)`.
    pub costate0: Vec<f64>,
}

/// `c[q][r] = q! r! / (q + r + 1)!`.
fn adjoint_coefficients() -> &'static [[f64; TAYLOR_MAX_TERMS + 1]; TAYLOR_MAX_TERMS + 1] {
    use std::sync::OnceLock;
    static TABLE: OnceLock<[[f64; TAYLOR_MAX_TERMS + 1]; TAYLOR_MAX_TERMS + 1]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [[0.0; TAYLOR_MAX_TERMS + 1]; TAYLOR_MAX_TERMS + 1];
        for (q, row) in t.iter_mut().enumerate() {
            for (r, c) in row.iter_mut().enumerate() {
                // 1 / ((q+r+1) · binom(q+r, q))
                let mut binom = 1.0;
                for i in 0..q {
                    binom *= (r + q - i) as f64 / (i + 1) as f64;
                }
                *c = 1.0 / ((q + r + 1) as f64 * binom);
            }
        }
        t
    })
}

/// Reusable buffers for [`adjoint_gradient`].
#[derive(Debug, Default)]
pub struct AdjointWorkspace {
    gens: Vec<SparseMatrix>,
    /// Substep inputs per slice.
    inputs: Vec<Vec<Vec<f64>>>,
    terms: Vec<Vec<Vec<f64>>>,
    alphas: Vec<Vec<f64>>,
    betas: Vec<Vec<f64>>,
    sums: Vec<Vec<f64>>,
    t1: Vec<f64>,
    t2: Vec<f64>,
}

pub fn adjoint_gradient(
    a0: &[f64],
    a_t: &[f64],
    protocol: &Protocol,
    system: &ControlSystem,
    ws: &mut AdjointWorkspace,
) -> Result<AdjointResult> {
    check_vec(system, a0)?;
    check_vec(system, a_t)?;
    protocol.validate(system)?;
    let d = system.dim();
    let m_total = protocol.slices();
    let nc = system.channels();
    let tol = f64::EPSILON;

    while ws.gens.len() < m_total {
        ws.gens.push(system.empty_generator());
    }
    ws.inputs.resize_with(m_total, Vec::new);
    ws.terms.resize_with(m_total, Vec::new);

    // Forward, recording the substep inputs and the polynomial degree used.
    let mut cur = a0.to_vec();
    let mut next = vec![0.0; d];
    let mut degrees: Vec<Vec<usize>> = Vec::with_capacity(m_total);
    for m in 0..m_total {
        let gen = &mut ws.gens[m];
        system.fill_generator(protocol.row(m), protocol.g, gen);
        let s = taylor_substeps(gen, protocol.tau[m]);
        let delta = protocol.tau[m] / s as f64;
        let inputs = &mut ws.inputs[m];
        inputs.resize_with(s, Vec::new);
        let mut degs = Vec::with_capacity(s);
        for input in inputs.iter_mut().take(s) {
            input.clear();
            input.extend_from_slice(&cur);
            let p = taylor_apply(gen, delta, &cur, &mut next, &mut ws.t1, &mut ws.t2, tol);
            degs.push(p);
            std::mem::swap(&mut cur, &mut next);
        }
        degrees.push(degs);
    }
    check_finite("propagated state", &cur)?;
    let final_state = cur;
    let f = dot(a_t, &final_state);

    // Backward through the same polynomials.
    let coef = adjoint_coefficients();
    let mut grad_h = vec![0.0; m_total * nc];
    let mut y = a_t.to_vec();
    let grow = |v: &mut Vec<Vec<f64>>, len: usize| {
        while v.len() < len {
            v.push(vec![0.0; d]);
        }
    };
    grow(&mut ws.alphas, TAYLOR_MAX_TERMS + 1);
    grow(&mut ws.betas, TAYLOR_MAX_TERMS + 1);
    grow(&mut ws.sums, TAYLOR_MAX_TERMS + 1);
    for m in (0..m_total).rev() {
        let gen = &ws.gens[m];
        let s = degrees[m].len();
        let delta = protocol.tau[m] / s as f64;
        let grow_row = &mut grad_h[m * nc..(m + 1) * nc];
        for i in (0..s).rev() {
            let p = degrees[m][i];
            let x = &ws.inputs[m][i];
            // α̃_r = (δG)^r x / r!, r < P
            ws.alphas[0].copy_from_slice(x);
            for r in 1..p {
                let (prev, rest) = ws.alphas.split_at_mut(r);
                gen.matvec_scaled(&prev[r - 1], delta / r as f64, &mut rest[0]);
            }
            // β̃_q = (−δG)^q y / q!, q ≤ P
            ws.betas[0].copy_from_slice(&y);
            for q in 1..=p {
                let (prev, rest) = ws.betas.split_at_mut(q);
                gen.matvec_scaled(&prev[q - 1], -delta / q as f64, &mut rest[0]);
            }
            // S̃_r = Σ_{q ≤ P-1-r} c[q][r] β̃_q
            for r in 0..p {
                let sum = &mut ws.sums[r];
                sum.iter_mut().for_each(|v| *v = 0.0);
                for q in 0..p - r {
                    let c = coef[q][r];
                    for (sv, bv) in sum.iter_mut().zip(&ws.betas[q]) {
                        *sv += c * bv;
                    }
                }
            }
            for (k, gk) in grow_row.iter_mut().enumerate() {
                let act = system.tensor().action(k);
                let mut acc = 0.0;
                for r in 0..p {
                    acc += act.bilinear(&ws.sums[r], &ws.alphas[r]);
                }
                *gk += delta * acc;
            }
            // y ← Vᵀ y
            y.iter_mut().for_each(|v| *v = 0.0);
            for q in 0..=p {
                for (yv, bv) in y.iter_mut().zip(&ws.betas[q]) {
                    *yv += bv;
                }
            }
        }
    }
    Ok(AdjointResult {
        f,
        final_state,
        grad_h,
        costate0: y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli_algebra::{generate_closure, PauliString};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain(n: usize, g: f64) -> (LieBasis, ControlSystem) {
        let b = generate_closure(n).unwrap();
        let s = ControlSystem::from_chain(&b, g).unwrap();
        (b, s)
    }

    fn random_protocol(sys: &ControlSystem, slices: usize, t_f: f64, amp: f64, seed: u64) -> Protocol {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Protocol::uniform(t_f, slices, sys.channels(), sys.layout().g).unwrap();
        for v in p.h.iter_mut() {
            *v = rng.random_range(-amp..amp);
        }
        p
    }

    fn random_vec(d: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_controls_zero_generator() {
        let (_, sys) = chain(3, 0.0);
        let g = assemble_generator(&vec![0.0; sys.channels()], 0.0, &sys).unwrap();
        assert!(g.triplets().all(|(_, _, v)| v == 0.0));
    }

    #[test]
    fn generator_layout_mismatch() {
        let (_, sys) = chain(3, 1.0);
        assert!(matches!(
            assemble_generator(&[1.0, 2.0], 1.0, &sys),
            Err(Error::Layout { .. })
        ));
    }

    #[test]
    fn random_generator_is_antisymmetric() {
        let (_, sys) = chain(5, 1.0);
        let p = random_protocol(&sys, 1, 1.0, 3.0, 7);
        let g = assemble_generator(p.row(0), 1.3, &sys).unwrap();
        assert_eq!(g.antisymmetry_defect(), 0.0);
    }

    #[test]
    fn single_z_generator_couples_commutator_pairs() {
        let (b, sys) = chain(2, 0.0);
        let mut h = vec![0.0; sys.channels()];
        h[0] = 1.0;
        let g = assemble_generator(&h, 0.0, &sys).unwrap();
        let z1 = PauliString::z(0, 2);
        for (j, e) in b.elements().iter().enumerate() {
            let col_nnz = g.triplets().filter(|t| t.1 == j && t.2 != 0.0).count();
            assert_eq!(col_nnz, usize::from(!e.commutes_with(&z1)), "{e}");
        }
    }

    #[test]
    fn planar_rotation() {
        let g = SparseMatrix::from_triplets(2, &[(0, 1, -1.0), (1, 0, 1.0)]);
        for backend in [ExpBackend::Taylor, ExpBackend::Krylov, ExpBackend::Dense] {
            let opts = ExpOptions { backend, tol: 1e-12 };
            let out = exp_action(&g, std::f64::consts::FRAC_PI_2, &[1.0, 0.0], opts).unwrap();
            assert!(max_diff(&out, &[0.0, 1.0]) < 1e-12, "{backend:?}: {out:?}");
            let same = exp_action(&SparseMatrix::zeros(2), 3.0, &[0.3, 0.4], opts).unwrap();
            assert_eq!(same, vec![0.3, 0.4]);
        }
    }

    #[test]
    fn exp_action_rejects_bad_input() {
        let g = SparseMatrix::from_triplets(2, &[(0, 1, -1.0), (1, 0, 1.0)]);
        let opts = ExpOptions::default();
        assert!(matches!(exp_action(&g, 1.0, &[f64::NAN, 0.0], opts), Err(Error::Numeric(_))));
        assert!(exp_action(&g, 1.0, &[1.0], opts).is_err());
        assert!(exp_action(&g, 1.0, &[1.0, 0.0], ExpOptions { tol: 0.0, ..opts }).is_err());
    }

    #[test]
    fn backends_agree_with_dense_exponential() {
        let (b, sys) = chain(8, 1.0);
        assert_eq!(b.len(), 153);
        let p = random_protocol(&sys, 1, 0.7, 4.0, 11);
        let g = assemble_generator(p.row(0), 1.0, &sys).unwrap();
        let v = random_vec(b.len(), 3);
        // Oracle: nalgebra's Padé exponential of the dense matrix.
        let oracle = ((g.to_dense() * 0.7).exp() * nalgebra::DVector::from_column_slice(&v))
            .as_slice()
            .to_vec();
        for backend in [ExpBackend::Taylor, ExpBackend::Krylov] {
            let out = exp_action(&g, 0.7, &v, ExpOptions { backend, tol: 1e-12 }).unwrap();
            assert!(max_diff(&out, &oracle) <= 1e-10, "{backend:?}");
            assert!((norm(&out) - norm(&v)).abs() <= 1e-12 * norm(&v));
        }
    }

    #[test]
    fn two_component_rotation_under_drift() {
        let (b, sys) = chain(2, 1.0);
        let mut a0 = vec![0.0; b.len()];
        let iz = b.index_of(&PauliString::z(0, 2)).unwrap();
        let iy = b.index_of(&PauliString::from_label("YX").unwrap()).unwrap();
        a0[iz] = 1.0;
        let t = std::f64::consts::FRAC_PI_4;
        let mut p = Protocol::uniform(t, 1, sys.channels(), 1.0).unwrap();
        p.h.iter_mut().for_each(|v| *v = 0.0);
        let out = propagate(&a0, &p, &sys).unwrap();
        assert!(out[iz].abs() < 1e-14);
        assert!((out[iy] + 1.0).abs() < 1e-14);
        for (i, v) in out.iter().enumerate() {
            if i != iz && i != iy {
                assert_eq!(*v, 0.0);
            }
        }
        // Intermediate time: cos / -sin.
        let p2 = Protocol::uniform(0.3, 3, sys.channels(), 1.0).unwrap();
        let out = propagate(&a0, &p2, &sys).unwrap();
        assert!((out[iz] - (0.6f64).cos()).abs() < 1e-14);
        assert!((out[iy] + (0.6f64).sin()).abs() < 1e-14);
    }

    #[test]
    fn zero_duration_is_identity() {
        let (b, sys) = chain(3, 1.0);
        let mut p = random_protocol(&sys, 4, 1.0, 2.0, 1);
        p.tau.iter_mut().for_each(|t| *t = 0.0);
        let a0 = random_vec(b.len(), 2);
        assert_eq!(propagate(&a0, &p, &sys).unwrap(), a0);
    }

    #[test]
    fn norm_drift_small() {
        let (b, sys) = chain(6, 1.0);
        let p = random_protocol(&sys, 120, 6.0, 10.0, 5);
        let a0 = random_vec(b.len(), 9);
        let out = propagate(&a0, &p, &sys).unwrap();
        assert!((norm(&out) - norm(&a0)).abs() <= 1e-10);
    }

    #[test]
    fn composition_and_time_reversal() {
        let (b, sys) = chain(4, 1.0);
        let p1 = random_protocol(&sys, 10, 1.5, 3.0, 21);
        let p2 = random_protocol(&sys, 7, 0.8, 3.0, 22);
        let a0 = random_vec(b.len(), 23);
        let split = propagate(&propagate(&a0, &p1, &sys).unwrap(), &p2, &sys).unwrap();
        let joined = propagate(&a0, &p1.concat(&p2).unwrap(), &sys).unwrap();
        assert!(max_diff(&split, &joined) < 1e-13);
        let back = propagate(&joined, &p1.concat(&p2).unwrap().reversed_negated(), &sys).unwrap();
        assert!(max_diff(&back, &a0) < 1e-9);
    }

    #[test]
    fn sweep_ends_and_consistency() {
        let (b, sys) = chain(3, 1.0);
        let p = random_protocol(&sys, 1, 0.4, 2.0, 4);
        let a0 = random_vec(b.len(), 5);
        let at = random_vec(b.len(), 6);
        let c = forward_backward(&a0, &at, &p, &sys).unwrap();
        assert_eq!(c.backward[1], at);
        assert!(max_diff(&c.forward[1], &propagate(&a0, &p, &sys).unwrap()) == 0.0);

        let (b, sys) = chain(5, 1.0);
        let p = random_protocol(&sys, 40, 3.0, 4.0, 8);
        let a0 = random_vec(b.len(), 9);
        let at = random_vec(b.len(), 10);
        let c = forward_backward(&a0, &at, &p, &sys).unwrap();
        let direct = dot(&at, &propagate(&a0, &p, &sys).unwrap());
        assert!((dot(&c.backward[0], &a0) - direct).abs() < 1e-12);
        assert!(c.consistency_defect() < 1e-12);
    }

    #[test]
    fn adjoint_matches_sweep_and_finite_differences() {
        let (b, sys) = chain(4, 1.0);
        let p = random_protocol(&sys, 12, 2.0, 3.0, 31);
        let a0 = random_vec(b.len(), 32);
        let at = random_vec(b.len(), 33);
        let mut ws = AdjointWorkspace::default();
        let r = adjoint_gradient(&a0, &at, &p, &sys, &mut ws).unwrap();
        let c = forward_backward(&a0, &at, &p, &sys).unwrap();
        assert!((r.f - c.f).abs() < 1e-13);
        assert!(max_diff(&r.costate0, &c.backward[0]) < 1e-13);
        let fval = |pp: &Protocol| dot(&at, &propagate(&a0, pp, &sys).unwrap());
        let eps = 1e-5;
        for idx in [0, 5, 17, 40, 70, p.h.len() - 1] {
            let mut plus = p.clone();
            plus.h[idx] += eps;
            let mut minus = p.clone();
            minus.h[idx] -= eps;
            let fd = (fval(&plus) - fval(&minus)) / (2.0 * eps);
            assert!((fd - r.grad_h[idx]).abs() < 1e-8 * fd.abs().max(1.0), "{idx}: {fd} vs {}", r.grad_h[idx]);
        }
    }
}
