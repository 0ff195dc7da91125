//! Unconstrained smooth minimization.
//!
//! Objectives may return `+inf` for infeasible points; the backtracking line
//! search treats those as rejected steps and keeps halving.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

/// Stopping and line-search parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    /// Stop once the Euclidean gradient norm falls below this.
    pub gradient_tol: f64,
    pub max_iterations: usize,
    /// L-BFGS history length.
    pub memory: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo_c1: f64,
    /// Step shrink factor during backtracking.
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            gradient_tol: 1e-8,
            max_iterations: 500,
            memory: 10,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
        }
    }
}

/// Outcome of a minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after every accepted step (first entry is the start).
    pub trace: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with Armijo backtracking.
///
/// `f(x)` returns the value and gradient. The starting point must have a
/// finite value.
pub fn lbfgs<F>(mut f: F, x0: &[f64], opts: &OptimizerOptions) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x)?;
    let mut trace = vec![fx];
    if !fx.is_finite() {
        return Ok(OptimResult {
            gradient_norm: f64::INFINITY,
            x,
            value: fx,
            iterations: 0,
            converged: false,
            trace,
        });
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;
    let mut converged = norm(&g) < opts.gradient_tol;
    let mut restarted = false;

    while !converged && iterations < opts.max_iterations {
        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = history
            .back()
            .map_or(1.0 / norm(&g).max(1.0), |(s, y, _)| dot(s, y) / dot(y, y));
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir = g.iter().map(|v| -v / norm(&g).max(1.0)).collect();
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = f(&trial)?;
            // Near the optimum the decrease drops below the rounding level of
            // `f`; the derivative form of the Armijo test still applies there.
            let armijo = ft <= fx + opts.armijo_c1 * step * slope;
            let approximate = ft <= fx + 4.0 * f64::EPSILON * fx.abs()
                && dot(&gt, &dir) <= (2.0 * opts.armijo_c1 - 1.0) * slope;
            if ft.is_finite() && (armijo || approximate) {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= opts.backtrack;
        }
        iterations += 1;
        match accepted {
            Some((xn, fnew, gn)) => {
                let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
                let stalled = norm(&s) <= f64::EPSILON * norm(&x) && norm(&gn) < 1e3 * opts.gradient_tol;
                let sy = dot(&s, &y);
                if sy > 1e-12 * norm(&s) * norm(&y) {
                    if history.len() == opts.memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                x = xn;
                fx = fnew;
                g = gn;
                trace.push(fx);
                restarted = false;
                converged = norm(&g) < opts.gradient_tol || stalled;
            }
            None => {
                if restarted || history.is_empty() {
                    break;
                }
                history.clear();
                restarted = true;
            }
        }
    }
    Ok(OptimResult {
        gradient_norm: norm(&g),
        x,
        value: fx,
        iterations,
        converged,
        trace,
    })
}

/// Damped Newton for convex objectives with an available Hessian.
///
/// `f(x)` returns value, gradient and Hessian (row-major, `n x n`).
pub fn newton<F>(mut f: F, x0: &[f64], opts: &OptimizerOptions) -> Result<OptimResult>
where
    F: FnMut(&[f64], bool) -> Result<(f64, Vec<f64>, Option<Vec<f64>>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g, mut h) = f(&x, true)?;
    let mut trace = vec![fx];
    let mut iterations = 0;
    let mut converged = fx.is_finite() && norm(&g) < opts.gradient_tol;
    while fx.is_finite() && !converged && iterations < opts.max_iterations {
        let hess = DMatrix::from_row_slice(n, n, h.as_deref().expect("Hessian requested"));
        let grad = DVector::from_column_slice(&g);
        let dir = solve_spd(&hess, &grad).map(|d| -d).unwrap_or_else(|| -grad.clone());
        let dir: Vec<f64> = dir.iter().copied().collect();
        let slope = dot(&g, &dir);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (ft, _, _) = f(&trial, false)?;
            if ft.is_finite() && ft <= fx + opts.armijo_c1 * step * slope {
                accepted = Some(trial);
                break;
            }
            step *= opts.backtrack;
        }
        iterations += 1;
        let Some(xn) = accepted else { break };
        let (fnew, gn, hn) = f(&xn, true)?;
        let decrement = -slope;
        x = xn;
        fx = fnew;
        g = gn;
        h = hn;
        trace.push(fx);
        // The decrement bounds the remaining decrease; below the rounding level of
        // `f` further steps cannot make progress.
        converged = norm(&g) < opts.gradient_tol || decrement < 1e-24_f64.max(1e-16 * fx.abs());
    }
    Ok(OptimResult {
        gradient_norm: norm(&g),
        x,
        value: fx,
        iterations,
        converged,
        trace,
    })
}

/// Solves `A x = b` for symmetric positive (semi)definite `A`, adding a
/// small ridge when the Cholesky factorization fails.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(b));
    }
    let n = a.nrows();
    let trace: f64 = (0..n).map(|i| a[(i, i)]).sum::<f64>().abs().max(1e-300);
    let mut lambda = 1e-10 * trace / n as f64;
    for _ in 0..12 {
        let mut reg = a.clone();
        for i in 0..n {
            reg[(i, i)] += lambda;
        }
        if let Some(ch) = reg.cholesky() {
            return Some(ch.solve(b));
        }
        lambda *= 100.0;
    }
    None
}
