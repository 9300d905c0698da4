//! Box-constrained gradient descent with forward finite differences and the
//! Barzilai-Borwein step `gamma = |dtheta . dg| / (dg . dg)`.
//!
//! Shared by model fitting and the controller search. Only strict
//! improvements are accepted, so the accepted iterates form a strictly
//! decreasing sequence and the current point is always the best seen.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescentOptions {
    /// Stop once an accepted step improves the objective by less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// First step length; defaults to a move of 10% of the smallest finite
    /// bound width (or 0.1) along the largest gradient component.
    pub initial_step: Option<f64>,
    /// Halvings tried after a rejected step before declaring convergence.
    pub max_backtracks: usize,
    /// When set, the finite-difference step of a coordinate with finite
    /// bounds is this fraction of the bound width instead of [`fd_step`].
    /// Useful for objectives that are piecewise constant on a fine scale,
    /// such as divergences between histograms.
    pub fd_width_fraction: Option<f64>,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 200, initial_step: None, max_backtracks: 12, fd_width_fraction: None }
    }
}

/// One objective evaluation along the descent path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentRecord {
    pub iteration: usize,
    pub value: f64,
    pub theta: Vec<f64>,
    pub step: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentResult {
    pub theta: Vec<f64>,
    pub value: f64,
    /// Number of accepted steps.
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<DescentRecord>,
}

/// Forward-difference step for coordinate value `x`.
pub fn fd_step(x: f64) -> f64 {
    (1e-4 * x.abs()).max(1e-4)
}

/// Clamps `theta` into `bounds`.
pub fn project(theta: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    theta.iter().zip(bounds).map(|(&x, &(lo, hi))| x.clamp(lo, hi)).collect()
}

/// Finite-difference step of coordinate `i` at value `x`.
fn probe_step(x: f64, (lo, hi): (f64, f64), width_fraction: Option<f64>) -> f64 {
    match width_fraction {
        Some(frac) if (hi - lo).is_finite() && hi > lo => frac * (hi - lo),
        _ => fd_step(x),
    }
}

/// Forward-difference gradient, one objective call per coordinate, in
/// parallel. A coordinate sitting on its upper bound, or whose forward
/// probe is non-finite, uses a backward difference instead.
pub fn fd_gradient<F>(f: &F, theta: &[f64], f0: f64, bounds: &[(f64, f64)]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    fd_gradient_with(f, theta, f0, bounds, None)
}

fn fd_gradient_with<F>(
    f: &F,
    theta: &[f64],
    f0: f64,
    bounds: &[(f64, f64)],
    width_fraction: Option<f64>,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    (0..theta.len())
        .into_par_iter()
        .map(|i| {
            let mut h = probe_step(theta[i], bounds[i], width_fraction);
            if theta[i] + h > bounds[i].1 {
                h = -h;
            }
            let mut probe = theta.to_vec();
            probe[i] += h;
            let mut fi = f(&probe)?;
            if !fi.is_finite() && theta[i] - h.abs() >= bounds[i].0 {
                h = -h.abs();
                probe[i] = theta[i] + h;
                fi = f(&probe)?;
            }
            if !fi.is_finite() {
                return Err(Error::NonFiniteObjective(format!("probe of coordinate {i} gave {fi}")));
            }
            Ok((fi - f0) / h)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_bounds(init: &[f64], bounds: &[(f64, f64)]) -> Result<()> {
    if init.len() != bounds.len() {
        return Err(Error::DimensionMismatch(format!("{} parameters but {} bounds", init.len(), bounds.len())));
    }
    if init.is_empty() {
        return Err(Error::InvalidArgument("no parameters to optimize".into()));
    }
    if let Some(i) = bounds.iter().position(|&(lo, hi)| !(lo <= hi)) {
        return Err(Error::InvalidArgument(format!("empty bound for parameter {i}")));
    }
    Ok(())
}

/// Minimizes `f` over the box `bounds` starting from `init` (projected).
pub fn minimize<F>(f: F, init: &[f64], bounds: &[(f64, f64)], opts: &DescentOptions) -> Result<DescentResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    check_bounds(init, bounds)?;
    if let Some(frac) = opts.fd_width_fraction {
        if !(frac > 0.0 && frac < 1.0) {
            return Err(Error::InvalidArgument(format!("fd_width_fraction {frac} outside (0, 1)")));
        }
    }
    let mut theta = project(init, bounds);
    let mut value = f(&theta)?;
    if !value.is_finite() {
        return Err(Error::NonFiniteObjective(format!("objective at the initial point is {value}")));
    }
    let mut trace = vec![DescentRecord { iteration: 0, value, theta: theta.clone(), step: 0.0, accepted: true }];
    let mut grad = fd_gradient_with(&f, &theta, value, bounds, opts.fd_width_fraction)?;
    let scale =
        bounds.iter().map(|&(lo, hi)| hi - lo).filter(|w| w.is_finite() && *w > 0.0).fold(f64::INFINITY, f64::min);
    let scale = if scale.is_finite() { 0.1 * scale } else { 0.1 };
    let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut step = opts.initial_step.unwrap_or(scale / gmax.max(1e-12));
    let mut accepted = 0;
    let mut converged = false;

    for iteration in 1..=opts.max_iter {
        let mut gamma = step;
        let mut next = None;
        for _ in 0..=opts.max_backtracks {
            let cand: Vec<f64> = theta.iter().zip(&grad).map(|(x, g)| x - gamma * g).collect();
            let cand = project(&cand, bounds);
            if cand == theta {
                break;
            }
            let fc = f(&cand)?;
            let ok = fc.is_finite() && fc < value;
            trace.push(DescentRecord { iteration, value: fc, theta: cand.clone(), step: gamma, accepted: ok });
            if ok {
                next = Some((cand, fc));
                break;
            }
            gamma *= 0.5;
        }
        let Some((cand, fc)) = next else {
            converged = true;
            break;
        };
        let improvement = value - fc;
        let new_grad = fd_gradient_with(&f, &cand, fc, bounds, opts.fd_width_fraction)?;
        let dtheta: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let dgrad: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let gg = dot(&dgrad, &dgrad);
        step = if gg > 0.0 { dot(&dtheta, &dgrad).abs() / gg } else { 2.0 * gamma };
        if !(step.is_finite() && step > 0.0) {
            step = gamma;
        }
        theta = cand;
        value = fc;
        grad = new_grad;
        accepted += 1;
        if improvement < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(DescentResult { theta, value, iterations: accepted, converged, trace })
}

/// Maximizes `f`; the returned `value` and trace are in terms of `f`.
pub fn maximize<F>(f: F, init: &[f64], bounds: &[(f64, f64)], opts: &DescentOptions) -> Result<DescentResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let mut r = minimize(|t: &[f64]| f(t).map(|v| -v), init, bounds, opts)?;
    r.value = -r.value;
    for rec in &mut r.trace {
        rec.value = -rec.value;
    }
    Ok(r)
}
