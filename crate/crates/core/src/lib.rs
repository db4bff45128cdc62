// Copyright 2026 The liethermal Authors
// SPDX-License-Identifier: Apache-2.0

//! Thermal-state preparation for Hamiltonians outside the native
//! interaction set, by optimal control of the parent Hamiltonian in the
//! adjoint representation of a polynomially sized Lie algebra.

// Validation deliberately uses `!(x > 0.0)` so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod pauli_algebra;
pub mod models;
pub mod dynamics;
pub mod lbfgs;
pub mod control;
pub mod thermal_sampling;
pub mod circuit_builder;
pub mod verifier;
pub mod io;

pub use error::{Error, Result};
