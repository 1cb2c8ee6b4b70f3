//! Two-vertex stationary law built from a fixed point `F`:
//!
//! ```text
//! rho(x, y) = Z^{-1} exp(-U(x) - U(y) - K(x-y) - (m-1)F(x) - (m-1)F(y))
//! l(x)      = exp(-U(x)/m - F(x))
//! Q(x, y)   = exp(-C1 - U(x)/m - U(y)/m - K(x-y))
//! ```
//!
//! `Q` is never tabulated; it is evaluated on demand.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShmError};
use crate::fixed_point::FixedPointSolution;
use crate::numerics::{convolve_weight, integrate, Grid, GridFunction};
use crate::potentials::ModelConfig;

/// Exponent used for the technical integrability check.
pub const TECH_EXPONENT: f64 = 1.5;

#[derive(Debug, Clone)]
pub struct EdgeLaw {
    cfg: ModelConfig,
    /// Joint density, row-major `n x n`.
    rho: Vec<f64>,
    pub z: f64,
    pub c1: f64,
    pub c2: f64,
    pub f: GridFunction,
    pub l: GridFunction,
    pub rho_x: GridFunction,
    /// `\int\int (|U'(x)|^p + |K'(x-y)|^p) rho(x, y)` with `p = 1.5`.
    pub tech_integral: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeLawSummary {
    pub z: f64,
    pub c1: f64,
    pub c2: f64,
    pub mean: f64,
    pub variance: f64,
    pub correlation: f64,
    pub tech_integral: f64,
}

pub fn build_edge_law(cfg: &ModelConfig, sol: &FixedPointSolution) -> Result<EdgeLaw> {
    let grid = cfg.grid;
    let n = grid.len();
    let m = cfg.m as f64;
    let w = grid.quadrature_weights();
    let xs = grid.points();
    let u: Vec<f64> = xs.iter().map(|&x| cfg.u().value(x)).collect();
    let a: Vec<f64> = u
        .iter()
        .zip(&sol.f.values)
        .map(|(ui, fi)| -ui - (m - 1.0) * fi)
        .collect();
    let shift = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(ShmError::NormalizationDiverges);
    }
    let e: Vec<f64> = a.iter().map(|ai| (ai - shift).exp()).collect();
    let k = cfg.k();
    let mut rho: Vec<f64> = vec![0.0; n * n];
    rho.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, r) in row.iter_mut().enumerate() {
            *r = e[i] * e[j] * k.boltzmann(xs[i] - xs[j]);
        }
    });
    let row_mass: Vec<f64> = rho
        .par_chunks(n)
        .map(|row| row.iter().zip(&w).map(|(r, wj)| r * wj).sum())
        .collect();
    let z_scaled: f64 = row_mass.iter().zip(&w).map(|(r, wi)| r * wi).sum();
    let z = z_scaled * (2.0 * shift).exp();
    if !(z_scaled > 0.0) || !z_scaled.is_finite() || !z.is_finite() {
        return Err(ShmError::NormalizationDiverges);
    }
    rho.par_iter_mut().for_each(|r| *r /= z_scaled);
    let rho_x = GridFunction {
        grid,
        values: row_mass.iter().map(|r| r / z_scaled).collect(),
    };
    let l = GridFunction {
        grid,
        values: u
            .iter()
            .zip(&sol.f.values)
            .map(|(ui, fi)| (-ui / m - fi).exp())
            .collect(),
    };
    let c1 = sol.c;
    let c2 = z * (-c1).exp();

    let p = TECH_EXPONENT;
    let du: Vec<f64> = xs.iter().map(|&x| cfg.u().derivative(x).abs().powf(p)).collect();
    let tech_rows: Vec<f64> = rho
        .par_chunks(n)
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, r)| **r > 0.0)
                .map(|(j, r)| w[j] * r * (du[i] + k.derivative(xs[i] - xs[j]).abs().powf(p)))
                .sum::<f64>()
        })
        .collect();
    let tech_integral = tech_rows.iter().zip(&w).map(|(t, wi)| t * wi).sum();

    Ok(EdgeLaw {
        cfg: cfg.clone(),
        rho,
        z,
        c1,
        c2,
        f: sol.f.clone(),
        l,
        rho_x,
        tech_integral,
    })
}

impl EdgeLaw {
    pub fn grid(&self) -> Grid {
        self.cfg.grid
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn m(&self) -> usize {
        self.cfg.m
    }

    /// Joint density at grid indices `(i, j)`.
    #[inline]
    pub fn rho(&self, i: usize, j: usize) -> f64 {
        self.rho[i * self.grid().len() + j]
    }

    pub fn rho_row(&self, i: usize) -> &[f64] {
        let n = self.grid().len();
        &self.rho[i * n..(i + 1) * n]
    }

    /// `Q(x, y)`.
    pub fn q(&self, x: f64, y: f64) -> f64 {
        let m = self.cfg.m as f64;
        let u = self.cfg.u();
        (-self.c1 - u.value(x) / m - u.value(y) / m).exp() * self.cfg.k().boltzmann(x - y)
    }

    /// `C2^{-1} l(x)^m`, the marginal predicted by the boundary law.
    pub fn boundary_marginal(&self) -> GridFunction {
        let m = self.cfg.m as i32;
        self.l.map(|v| v.powi(m) / self.c2)
    }

    /// Mean, variance and edge correlation of the tabulated joint law.
    pub fn summary(&self) -> EdgeLawSummary {
        let grid = self.grid();
        let xs = grid.points();
        let w = grid.quadrature_weights();
        let mean = xs.iter().zip(&self.rho_x.values).zip(&w).map(|((x, r), w)| x * r * w).sum::<f64>();
        let second = xs
            .iter()
            .zip(&self.rho_x.values)
            .zip(&w)
            .map(|((x, r), w)| x * x * r * w)
            .sum::<f64>();
        let variance = second - mean * mean;
        let cross: f64 = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let row = self.rho_row(i);
                w[i] * (xs[i] - mean)
                    * row
                        .iter()
                        .zip(&xs)
                        .zip(&w)
                        .map(|((r, y), wj)| r * (y - mean) * wj)
                        .sum::<f64>()
            })
            .collect::<Vec<_>>()
            .iter()
            .sum();
        EdgeLawSummary {
            z: self.z,
            c1: self.c1,
            c2: self.c2,
            mean,
            variance,
            correlation: cross / variance,
            tech_integral: self.tech_integral,
        }
    }

    /// Copy with the boundary law replaced, for negative controls.
    pub fn with_boundary_law(&self, l: GridFunction) -> EdgeLaw {
        EdgeLaw {
            l,
            ..self.clone()
        }
    }
}

/// `\int Q(x, y) l(y)^{m-1} dy` at every grid `x`.
fn boundary_operator(law: &EdgeLaw, cfg: &ModelConfig) -> Result<GridFunction> {
    let m = cfg.m as f64;
    let grid = cfg.grid;
    let g = GridFunction::from_fn(grid, |y| (-cfg.u().value(y) / m).exp())
        .zip_map(&law.l, |e, l| e * l.powf(m - 1.0));
    let conv = convolve_weight(&g, cfg.k().weight_kernel())?;
    Ok(GridFunction::from_fn(grid, |x| (-law.c1 - cfg.u().value(x) / m).exp())
        .zip_map(&conv, |a, b| a * b))
}

/// `sup_x |\int Q(x,y) l(y)^{m-1} dy - l(x)| / l(x)`.
pub fn boundary_law_residual(law: &EdgeLaw, cfg: &ModelConfig) -> Result<f64> {
    let lhs = boundary_operator(law, cfg)?;
    Ok(lhs
        .values
        .iter()
        .zip(&law.l.values)
        .filter(|(_, l)| **l > 0.0)
        .fold(0.0_f64, |acc, (a, l)| acc.max((a - l).abs() / l)))
}

/// Child density `kappa(y | x) = Q(x, y) l(y)^{m-1} / l(x)` at parent value
/// `x`. The denominator is evaluated as `\int Q(x, y) l(y)^{m-1} dy`, which
/// is `l(x)` whenever `l` satisfies the boundary-law identity, and which is
/// defined for off-grid `x` as well.
pub fn conditional_kernel(law: &EdgeLaw, x: f64) -> Result<GridFunction> {
    let grid = law.grid();
    if !grid.contains(x) {
        return Err(ShmError::OutsideGrid(x));
    }
    let cfg = &law.cfg;
    let m = cfg.m as f64;
    let raw = GridFunction::from_fn(grid, |y| {
        cfg.k().boltzmann(x - y) * (-cfg.u().value(y) / m).exp()
    })
    .zip_map(&law.l, |a, l| a * l.powf(m - 1.0));
    let mass = integrate(&raw)?;
    if !(mass > 0.0) {
        return Err(ShmError::ZeroMass);
    }
    Ok(raw.map(|v| v / mass))
}
