// Copyright 2026 The liethermal Authors
// SPDX-License-Identifier: Apache-2.0

//! On-disk formats: problem configuration, algebra and solution documents,
//! plot-ready CSV curves and the run manifest.
//!
//! JSON floats use the shortest representation that round-trips exactly;
//! CSV floats are written with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::{ControlProblem, GradientMode, InitialCondition, OptimizeConfig, QslCurve, Solution};
use crate::dynamics::Protocol;
use crate::error::{Error, Result};
use crate::models::{cluster_ising_target, normalize_params, ClusterIsingParams};
use crate::pauli_algebra::{generate_closure, CartanLabel, LieBasis};
use crate::thermal_sampling::SpinSample;
use crate::verifier::BetaPoint;

fn default_lambda_scale() -> f64 {
    1.0
}
fn default_g() -> f64 {
    1.0
}
fn default_restarts() -> usize {
    OptimizeConfig::default().restarts
}
fn default_max_iter() -> usize {
    OptimizeConfig::default().max_iter
}
fn default_grad_tol() -> f64 {
    OptimizeConfig::default().grad_tol
}
fn default_j_tol() -> f64 {
    1e-10
}

/// Run-level problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub n: usize,
    /// Raw `(λ1, λ2, λ3)`, rescaled to sum to `lambda_scale`.
    pub lambdas: [f64; 3],
    #[serde(default = "default_lambda_scale")]
    pub lambda_scale: f64,
    #[serde(default = "default_g")]
    pub g: f64,
    pub t_f: f64,
    /// Number of slices; defaults to `discretization_factor · n`.
    #[serde(default)]
    pub slices: Option<usize>,
    #[serde(default)]
    pub discretization_factor: Option<usize>,
    #[serde(default)]
    pub h_bound: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_j_tol")]
    pub j_tol: f64,
    #[serde(default)]
    pub gradient: GradientMode,
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("problem config: {e}")))
    }

    pub fn params(&self) -> Result<ClusterIsingParams> {
        normalize_params(self.lambdas, self.lambda_scale)
    }

    pub fn slice_count(&self) -> usize {
        self.slices
            .unwrap_or_else(|| self.discretization_factor.unwrap_or(20) * self.n)
    }

    /// Checks every field before any computation starts.
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::UnsupportedSize(format!(
                "the cluster Ising target needs n >= 3, got {}",
                self.n
            )));
        }
        if self.n > 64 {
            return Err(Error::UnsupportedSize(format!("n = {} exceeds 64", self.n)));
        }
        self.params()?;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameters(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("t_f", self.t_f)?;
        positive("grad_tol", self.grad_tol)?;
        if !self.g.is_finite() {
            return Err(Error::InvalidParameters("g must be finite".into()));
        }
        if !(self.j_tol >= 0.0) {
            return Err(Error::InvalidParameters(format!("j_tol must be nonnegative, got {}", self.j_tol)));
        }
        if let Some(b) = self.h_bound {
            positive("h_bound", b)?;
        }
        if self.slice_count() == 0 {
            return Err(Error::InvalidParameters("need at least one slice".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameters("need at least one restart".into()));
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<ControlProblem> {
        self.validate()?;
        let basis = generate_closure(self.n)?;
        let target = cluster_ising_target(self.n, &self.params()?, &basis)?;
        ControlProblem::new(basis, self.g, target, self.t_f, self.slice_count())
    }

    pub fn optimize_config(&self) -> OptimizeConfig {
        OptimizeConfig {
            restarts: self.restarts,
            seed: self.seed,
            max_iter: self.max_iter,
            grad_tol: self.grad_tol,
            j_tol: self.j_tol,
            h_bound: self.h_bound,
            gradient: self.gradient,
            ..OptimizeConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgebraElement {
    pub x: String,
    pub z: String,
    pub label: String,
    pub sector: String,
}

/// Basis listing with the content hash used to validate other documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgebraDocument {
    pub n: usize,
    pub dim: usize,
    pub basis_hash: String,
    pub h_indices: Vec<usize>,
    pub elements: Vec<AlgebraElement>,
}

impl AlgebraDocument {
    pub fn from_basis(basis: &LieBasis) -> Self {
        let elements = basis
            .elements()
            .iter()
            .zip(basis.labels())
            .map(|(p, l)| AlgebraElement {
                x: format!("{:#x}", p.x_mask()),
                z: format!("{:#x}", p.z_mask()),
                label: p.label(),
                sector: match l {
                    CartanLabel::K => "K".into(),
                    CartanLabel::M => "M".into(),
                },
            })
            .collect();
        Self {
            n: basis.n(),
            dim: basis.len(),
            basis_hash: basis.content_hash(),
            h_indices: basis.h_indices().to_vec(),
            elements,
        }
    }
}

/// Persisted optimisation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub n: usize,
    pub basis_hash: String,
    /// `(c_0, c_1, …, c_n)` after rescaling.
    pub c: Vec<f64>,
    pub c_scale: f64,
    /// Slice durations.
    pub tau: Vec<f64>,
    /// `h[m][k]`: slice `m`, channel `k` (`Z_1..Z_n, X_1, X_n`).
    pub h: Vec<Vec<f64>>,
    #[serde(rename = "J")]
    pub j: f64,
    pub seed: u64,
    pub converged: bool,
    pub wall_seconds: f64,
    pub g: f64,
    pub lambdas: [f64; 3],
    pub lambda_scale: f64,
    pub restart: usize,
    pub iterations: usize,
}

impl SolutionDocument {
    pub fn new(sol: &Solution, config: &ProblemConfig) -> Self {
        let p = &sol.protocol;
        Self {
            n: sol.n(),
            basis_hash: sol.basis_hash.clone(),
            c: sol.c.c.clone(),
            c_scale: sol.c_scale,
            tau: p.tau.clone(),
            h: (0..p.slices()).map(|m| p.row(m).to_vec()).collect(),
            j: sol.j,
            seed: sol.seed,
            converged: sol.converged,
            wall_seconds: sol.wall_seconds,
            g: p.g,
            lambdas: config.lambdas,
            lambda_scale: config.lambda_scale,
            restart: sol.restart,
            iterations: sol.iterations,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("solution file: {e}")))
    }

    /// Rebuilds the basis and target, refusing a mismatched basis hash.
    pub fn problem(&self) -> Result<ControlProblem> {
        let basis = generate_closure(self.n)?;
        let hash = basis.content_hash();
        if hash != self.basis_hash {
            return Err(Error::BasisMismatch {
                expected: hash,
                found: self.basis_hash.clone(),
            });
        }
        let params = normalize_params(self.lambdas, self.lambda_scale)?;
        let target = cluster_ising_target(self.n, &params, &basis)?;
        let t_f = self.tau.iter().sum();
        ControlProblem::new(basis, self.g, target, t_f, self.tau.len())
    }

    pub fn solution(&self, problem: &ControlProblem) -> Result<Solution> {
        if problem.basis.content_hash() != self.basis_hash {
            return Err(Error::BasisMismatch {
                expected: problem.basis.content_hash(),
                found: self.basis_hash.clone(),
            });
        }
        let channels = problem.channels();
        if self.h.len() != self.tau.len() || self.h.iter().any(|row| row.len() != channels) {
            return Err(Error::Layout {
                expected: channels,
                found: self.h.first().map_or(0, Vec::len),
            });
        }
        let protocol = Protocol {
            tau: self.tau.clone(),
            h: self.h.concat(),
            channels,
            g: self.g,
        };
        protocol.validate(&problem.system)?;
        Ok(Solution {
            c: InitialCondition::new(self.c.clone())?,
            protocol,
            j: self.j,
            c_scale: self.c_scale,
            basis_hash: self.basis_hash.clone(),
            seed: self.seed,
            restart: self.restart,
            iterations: self.iterations,
            converged: self.converged,
            wall_seconds: self.wall_seconds,
            target: problem.target.clone(),
        })
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

/// Columns `g_times_tf,best_J,restarts_used`.
pub fn qsl_csv(curve: &QslCurve, g: f64, basis_hash: &str) -> String {
    let mut s = format!("# basis_hash={basis_hash}\n");
    if let Some(t) = curve.t_min {
        let _ = writeln!(s, "# t_min={}", fmt_f(t));
    }
    s.push_str("g_times_tf,best_J,restarts_used\n");
    for p in &curve.points {
        let _ = writeln!(s, "{},{},{}", fmt_f(g * p.t_f), fmt_f(p.best_j), p.restarts_used);
    }
    s
}

/// Columns `lambda_beta,state_infidelity,operator_infidelity`.
pub fn beta_curve_csv(points: &[BetaPoint], basis_hash: &str) -> String {
    let mut s = format!("# basis_hash={basis_hash}\nlambda_beta,state_infidelity,operator_infidelity\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", fmt_f(p.lambda_beta), fmt_f(p.state_infidelity), fmt_f(p.operator_infidelity));
    }
    s
}

/// Columns `z_1..z_n,energy`; the header records seed, stream and the
/// bit convention.
pub fn samples_csv(
    samples: &[SpinSample],
    energies: &[f64],
    n: usize,
    seed: u64,
    stream: u64,
    beta: f64,
    basis_hash: &str,
) -> String {
    let mut s = format!(
        "# basis_hash={basis_hash}\n# seed={seed} stream={stream} beta={}\n# convention: |0> <-> z=+1\n",
        fmt_f(beta)
    );
    let cols: Vec<String> = (1..=n).map(|j| format!("z_{j}")).chain(std::iter::once("energy".into())).collect();
    s.push_str(&cols.join(","));
    s.push('\n');
    for (smp, e) in samples.iter().zip(energies) {
        for z in &smp.z {
            let _ = write!(s, "{z},");
        }
        let _ = writeln!(s, "{}", fmt_f(*e));
    }
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance of one CLI run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub basis_hash: String,
    pub config: serde_json::Value,
    pub stages: Vec<StageTiming>,
    pub outputs: Vec<OutputDigest>,
}

impl RunManifest {
    pub fn new(basis_hash: String, config: serde_json::Value) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            basis_hash,
            config,
            stages: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn stage(&mut self, name: &str, wall_seconds: f64) {
        self.stages.push(StageTiming { stage: name.into(), wall_seconds });
    }

    pub fn output(&mut self, path: &Path, contents: &[u8]) {
        self.outputs.push(OutputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(contents),
        });
    }
}
