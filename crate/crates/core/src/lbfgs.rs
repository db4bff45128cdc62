// Copyright 2026 The liethermal Authors
// SPDX-License-Identifier: Apache-2.0

//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when `‖∇f‖_∞` drops below this.
    pub grad_tol: f64,
    /// Stop when `f` drops below this.
    pub f_tol: f64,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    /// Largest change of any variable in the first step.
    pub initial_step: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 20,
            max_iter: 1000,
            grad_tol: 1e-10,
            f_tol: 0.0,
            armijo: 1e-4,
            initial_step: 0.1,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    ValueTolerance,
    MaxIterations,
    LineSearchFailed,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct LbfgsReport {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimises `f`; `eval(x, grad)` returns `f(x)` and writes `∇f(x)`.
pub fn minimize<F>(mut eval: F, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsReport
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let nvar = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; nvar];
    let mut f = eval(&x, &mut g);
    let mut evaluations = 1;
    let mut history = vec![f];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut dir = vec![0.0; nvar];
    let mut x_new = vec![0.0; nvar];
    let mut g_new = vec![0.0; nvar];
    let mut alpha_buf = vec![0.0; opts.memory];
    let mut iterations = 0;

    let stop = loop {
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            break StopReason::NonFinite;
        }
        if f <= opts.f_tol {
            break StopReason::ValueTolerance;
        }
        if inf_norm(&g) <= opts.grad_tol {
            break StopReason::GradientTolerance;
        }
        if iterations >= opts.max_iter {
            break StopReason::MaxIterations;
        }

        // Two-loop recursion: dir = -H g.
        dir.copy_from_slice(&g);
        for (i, (s, y, rho)) in pairs.iter().enumerate().rev() {
            let a = rho * dot(s, &dir);
            alpha_buf[i] = a;
            dir.iter_mut().zip(y).for_each(|(d, yv)| *d -= a * yv);
        }
        let gamma = match pairs.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => opts.initial_step / inf_norm(&g),
        };
        dir.iter_mut().for_each(|d| *d *= gamma);
        for (i, (s, y, rho)) in pairs.iter().enumerate() {
            let b = rho * dot(y, &dir);
            let a = alpha_buf[i];
            dir.iter_mut().zip(s).for_each(|(d, sv)| *d += (a - b) * sv);
        }
        dir.iter_mut().for_each(|d| *d = -*d);
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            pairs.clear();
            let scale = opts.initial_step / inf_norm(&g);
            dir.iter_mut().zip(&g).for_each(|(d, gv)| *d = -scale * gv);
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = false;
        let mut f_new = f;
        for _ in 0..=opts.max_backtracks {
            x_new.iter_mut().zip(&x).zip(&dir).for_each(|((xn, xv), d)| *xn = xv + step * d);
            f_new = eval(&x_new, &mut g_new);
            evaluations += 1;
            if f_new.is_finite() && f_new <= f + opts.armijo * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if !pairs.is_empty() {
                // Stale curvature can spoil the direction; retry from steepest descent.
                pairs.clear();
                continue;
            }
            break StopReason::LineSearchFailed;
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        history.push(f);
        iterations += 1;
    };

    LbfgsReport {
        grad_inf: inf_norm(&g),
        x,
        f,
        iterations,
        evaluations,
        stop,
        history,
    }
}
