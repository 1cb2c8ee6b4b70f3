//! Solvers for the fixed-point equation
//! `F(x) = C - log \int e^{-U(y) - K(x-y) - (m-1) F(y)} dy`.
//!
//! Solutions are unique only up to additive shifts; every function returned
//! here is gauged so that `F(0) = 0` at the grid origin.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ShmError};
use crate::numerics::{convolve_weight, integrate, GridFunction};
use crate::potentials::ModelConfig;

/// Largest admissible ratio between the boundary and peak values of the
/// integrand. Anything larger means the integral is not captured by the
/// grid (or diverges on the real line).
pub const TRUNCATION_RATIO: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    NotConverged,
    /// Built from a supplied candidate rather than by iteration.
    Candidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Picard,
    Power,
    Candidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSolution {
    /// Gauged solution, `F(0) = 0`.
    pub f: GridFunction,
    /// Constant `C` such that `F = C - log \int ...` for the gauged `F`.
    pub c: f64,
    /// Sup-norm of `T(F) - F`.
    pub residual: f64,
    pub iterations: usize,
    /// `\int e^{-U - mF}`.
    pub integrability: f64,
    pub status: SolveStatus,
    pub method: SolveMethod,
}

impl FixedPointSolution {
    pub fn converged(&self) -> bool {
        self.status != SolveStatus::NotConverged
    }

    /// Evaluate an explicit candidate `F` (gauged on entry).
    pub fn from_candidate(cfg: &ModelConfig, f: GridFunction) -> Result<Self> {
        finalize(cfg, f.gauged(), 0, SolveStatus::Candidate, SolveMethod::Candidate)
    }

    pub fn from_fn(cfg: &ModelConfig, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_candidate(cfg, GridFunction::from_fn(cfg.grid, f))
    }

    /// `F'` by centered differences.
    pub fn derivative(&self) -> GridFunction {
        self.f.derivative()
    }
}

/// Integrand weight `e^{-U - (m-1)F}` scaled by `e^{-shift}` so that its
/// maximum is 1. Returns the weight and the shift.
fn integrand_weight(cfg: &ModelConfig, f: &GridFunction) -> Result<(GridFunction, f64)> {
    let m1 = (cfg.m - 1) as f64;
    let exponent: Vec<f64> = f
        .values
        .iter()
        .enumerate()
        .map(|(i, &fv)| -cfg.u().value(cfg.grid.point(i)) - m1 * fv)
        .collect();
    let shift = exponent
        .iter()
        .copied()
        .filter(|e| !e.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(ShmError::MassUnderflow);
    }
    let values: Vec<f64> = exponent.iter().map(|e| (e - shift).exp()).collect();
    let n = values.len();
    for i in [0, n - 1] {
        if values[i] > TRUNCATION_RATIO {
            return Err(ShmError::Truncation {
                x: cfg.grid.point(i),
                ratio: values[i],
            });
        }
    }
    Ok((GridFunction { grid: f.grid, values }, shift))
}

/// `log \int e^{-U(y) - K(x-y) - (m-1)F(y)} dy` on the grid.
fn log_convolution(cfg: &ModelConfig, f: &GridFunction) -> Result<GridFunction> {
    let (g, shift) = integrand_weight(cfg, f)?;
    let conv = convolve_weight(&g, cfg.k().weight_kernel())?;
    if conv.values.iter().any(|&v| !(v > 0.0)) {
        return Err(ShmError::MassUnderflow);
    }
    Ok(conv.map(|v| v.ln() + shift))
}

/// The map `T(F)(x) = log \int e^{-U-K-(m-1)F} - log \int e^{-U(y)-K(x-y)-(m-1)F(y)} dy`,
/// gauged to vanish at the origin.
pub fn apply_t(cfg: &ModelConfig, f: &GridFunction) -> Result<GridFunction> {
    Ok(log_convolution(cfg, f)?.map(|v| -v).gauged())
}

fn finalize(
    cfg: &ModelConfig,
    f: GridFunction,
    iterations: usize,
    status: SolveStatus,
    method: SolveMethod,
) -> Result<FixedPointSolution> {
    let logc = log_convolution(cfg, &f)?;
    let o = cfg.grid.origin_index();
    let c = logc.values[o];
    // F = C - log conv, with F(0) = 0 fixing C.
    let t = logc.map(|v| c - v);
    let residual = t.sup_distance(&f);
    let m = cfg.m as i32;
    let integrand = GridFunction::from_fn(cfg.grid, |x| {
        let fi = f.interpolate(x).unwrap_or(f64::INFINITY);
        (-cfg.u().value(x) - m as f64 * fi).exp()
    });
    let integrability = integrate(&integrand).unwrap_or(f64::INFINITY);
    Ok(FixedPointSolution {
        f,
        c,
        residual,
        iterations,
        integrability,
        status,
        method,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            damping: 0.5,
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// Damped Picard iteration `F <- (1 - a) F + a T(F)`, stopped when the
/// gauged increment falls below `tol` in sup-norm. A run that exhausts
/// `max_iter` returns the last iterate with [`SolveStatus::NotConverged`].
pub fn solve_picard(
    cfg: &ModelConfig,
    opts: PicardOptions,
    init: &GridFunction,
) -> Result<FixedPointSolution> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(ShmError::InvalidArgument(format!(
            "damping must lie in (0, 1], got {}",
            opts.damping
        )));
    }
    if !init.is_finite() {
        return Err(ShmError::InvalidArgument("init must be finite".into()));
    }
    let a = opts.damping;
    let mut f = init.clone().gauged();
    for it in 1..=opts.max_iter {
        let t = apply_t(cfg, &f)?;
        let next = f.zip_map(&t, |x, y| (1.0 - a) * x + a * y).gauged();
        let delta = next.sup_distance(&f);
        f = next;
        if delta < opts.tol {
            return finalize(cfg, f, it, SolveStatus::Converged, SolveMethod::Picard);
        }
    }
    finalize(cfg, f, opts.max_iter, SolveStatus::NotConverged, SolveMethod::Picard)
}

/// Power iteration for the `m = 2` eigenproblem
/// `S phi(x) = \int phi(y) e^{-K(x-y) - U(y)} dy`, with `F = -log phi`.
pub fn solve_power_m2(cfg: &ModelConfig, tol: f64, max_iter: usize) -> Result<FixedPointSolution> {
    if cfg.m != 2 {
        return Err(ShmError::InvalidArgument(format!(
            "power iteration needs m = 2, got m = {}",
            cfg.m
        )));
    }
    let grid = cfg.grid;
    let eu = GridFunction::from_fn(grid, |x| cfg.u().boltzmann(x));
    let apply_s = |phi: &GridFunction| -> Result<GridFunction> {
        let g = phi.zip_map(&eu, |p, e| p * e);
        let out = convolve_weight(&g, cfg.k().weight_kernel())?;
        let norm = out.sup_norm();
        if !(norm > 0.0) {
            return Err(ShmError::ZeroMass);
        }
        Ok(out.map(|v| v / norm))
    };
    let to_f = |phi: &GridFunction| -> Result<GridFunction> {
        if phi.values.iter().any(|&v| !(v > 0.0)) {
            return Err(ShmError::MassUnderflow);
        }
        Ok(phi.map(|v| -v.ln()).gauged())
    };
    let mut phi = GridFunction::constant(grid, 1.0);
    let mut f = to_f(&phi)?;
    let mut status = SolveStatus::NotConverged;
    let mut iterations = max_iter;
    for it in 1..=max_iter {
        phi = apply_s(&phi)?;
        let next = to_f(&phi)?;
        let delta = next.sup_distance(&f);
        f = next;
        if delta < tol {
            status = SolveStatus::Converged;
            iterations = it;
            break;
        }
    }
    let mut sol = finalize(cfg, f, iterations, status, SolveMethod::Power)?;
    // Rayleigh quotient in L^2(e^{-U} dx) for the eigenvalue of S at the
    // gauged eigenfunction; C = log of that eigenvalue.
    let phi = sol.f.map(|v| (-v).exp());
    let sphi = convolve_weight(&phi.zip_map(&eu, |p, e| p * e), cfg.k().weight_kernel())?;
    let num = integrate(&phi.zip_map(&sphi, |a, b| a * b).zip_map(&eu, |a, e| a * e))?;
    let den = integrate(&phi.zip_map(&phi, |a, b| a * b).zip_map(&eu, |a, e| a * e))?;
    sol.c = (num / den).ln();
    Ok(sol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandCheck {
    pub in_band: bool,
    pub min_f2: f64,
    pub max_f2: f64,
    /// Lower edge `d = b - c / (m - 1)`.
    pub lower: f64,
    /// Upper edge `c`.
    pub upper: f64,
}

/// Slack allowed on both edges of the band.
pub const BAND_SLACK: f64 = 1e-3;

/// Whether the second differences of `F` lie in `[b - c/(m-1), c]`.
pub fn band_check(cfg: &ModelConfig, sol: &FixedPointSolution) -> Result<BandCheck> {
    let cb = cfg.potentials.curvature.ok_or(ShmError::CurvatureUnavailable)?;
    let lower = cb.b - cb.c / (cfg.m - 1) as f64;
    let upper = cb.c;
    let d2 = sol.f.second_differences();
    let min_f2 = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let max_f2 = d2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(BandCheck {
        in_band: min_f2 >= lower - BAND_SLACK && max_f2 <= upper + BAND_SLACK,
        min_f2,
        max_f2,
        lower,
        upper,
    })
}
