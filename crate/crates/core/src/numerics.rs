//! Deterministic numerical kernels on uniform grids.
//!
//! Every integral in the crate goes through the same quadrature weights
//! (composite Simpson for odd point counts, trapezoid otherwise), so that
//! discrete identities such as the boundary-law relation hold to rounding
//! error rather than to quadrature error.

use rayon::prelude::*;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShmError};

/// Half-width of the default grid.
pub const DEFAULT_HALF_WIDTH: f64 = 10.0;
/// Point count of the default grid (odd, for Simpson).
pub const DEFAULT_POINTS: usize = 2049;

/// Uniform grid `lo, lo + step, ..., hi` with `n` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lo: f64,
    hi: f64,
    n: usize,
    step: f64,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(ShmError::InvalidGrid(format!("need lo < hi, got [{lo}, {hi}]")));
        }
        if n < 3 {
            return Err(ShmError::InvalidGrid(format!("need n >= 3, got {n}")));
        }
        let step = (hi - lo) / (n - 1) as f64;
        Ok(Grid { lo, hi, n, step })
    }

    /// `[-half_width, half_width]` with `n` points.
    pub fn symmetric(half_width: f64, n: usize) -> Result<Self> {
        Grid::new(-half_width, half_width, n)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.lo == -self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Index of the grid point closest to `x` (clamped to the grid).
    pub fn nearest_index(&self, x: f64) -> usize {
        let t = ((x - self.lo) / self.step).round();
        t.clamp(0.0, (self.n - 1) as f64) as usize
    }

    /// Index of the point used as the gauge anchor (closest to 0).
    pub fn origin_index(&self) -> usize {
        self.nearest_index(0.0)
    }

    /// Index `i` of the cell `[x_i, x_{i+1}]` containing `x` and the fractional
    /// position inside it. `None` off-grid.
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        if !self.contains(x) {
            return None;
        }
        let t = (x - self.lo) / self.step;
        let i = (t.floor() as usize).min(self.n - 2);
        Some((i, t - i as f64))
    }

    /// Quadrature weights: composite Simpson for odd `n`, trapezoid for even `n`.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let h = self.step;
        let n = self.n;
        let mut w = vec![0.0; n];
        if n % 2 == 1 {
            for (i, wi) in w.iter_mut().enumerate() {
                *wi = if i == 0 || i == n - 1 {
                    h / 3.0
                } else if i % 2 == 1 {
                    4.0 * h / 3.0
                } else {
                    2.0 * h / 3.0
                };
            }
        } else {
            for (i, wi) in w.iter_mut().enumerate() {
                *wi = if i == 0 || i == n - 1 { h / 2.0 } else { h };
            }
        }
        w
    }
}

impl Default for Grid {
    fn default() -> Self {
        Grid::symmetric(DEFAULT_HALF_WIDTH, DEFAULT_POINTS).expect("default grid is valid")
    }
}

/// A real function tabulated on a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(ShmError::InvalidArgument(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        GridFunction { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        GridFunction {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination with another function on the same grid.
    pub fn zip_map(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        GridFunction {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Sup-distance to another function on the same grid.
    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// Shift so that the value at the origin index is exactly zero.
    pub fn gauged(mut self) -> Self {
        let c = self.values[self.grid.origin_index()];
        for v in &mut self.values {
            *v -= c;
        }
        self.values[self.grid.origin_index()] = 0.0;
        self
    }

    /// Linear interpolation; `None` off-grid.
    pub fn interpolate(&self, x: f64) -> Option<f64> {
        let (i, t) = self.grid.locate(x)?;
        Some(self.values[i] * (1.0 - t) + self.values[i + 1] * t)
    }

    /// Linear interpolation inside the grid, linear extrapolation from the
    /// two outermost points beyond it.
    pub fn interpolate_extrapolate(&self, x: f64) -> f64 {
        let g = &self.grid;
        let n = g.len();
        if x < g.lo() {
            let slope = (self.values[1] - self.values[0]) / g.step();
            self.values[0] + slope * (x - g.lo())
        } else if x > g.hi() {
            let slope = (self.values[n - 1] - self.values[n - 2]) / g.step();
            self.values[n - 1] + slope * (x - g.hi())
        } else {
            self.interpolate(x).expect("inside grid")
        }
    }

    /// Centered first difference (one-sided at the ends).
    pub fn derivative(&self) -> GridFunction {
        let n = self.len();
        let h = self.grid.step();
        let v = &self.values;
        let values = (0..n)
            .map(|i| {
                if i == 0 {
                    (v[1] - v[0]) / h
                } else if i == n - 1 {
                    (v[n - 1] - v[n - 2]) / h
                } else {
                    (v[i + 1] - v[i - 1]) / (2.0 * h)
                }
            })
            .collect();
        GridFunction {
            grid: self.grid,
            values,
        }
    }

    /// Second differences on the interior points `1..n-1`.
    pub fn second_differences(&self) -> Vec<f64> {
        let h2 = self.grid.step() * self.grid.step();
        self.values
            .windows(3)
            .map(|w| (w[0] - 2.0 * w[1] + w[2]) / h2)
            .collect()
    }
}

/// Quadrature of a tabulated function.
pub fn integrate(f: &GridFunction) -> Result<f64> {
    if !f.is_finite() {
        return Err(ShmError::NonFiniteIntegrand);
    }
    Ok(weighted_sum(&f.grid.quadrature_weights(), &f.values))
}

#[inline]
pub(crate) fn weighted_sum(w: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// The weight `e^{-K}` of a convolution-type integral.
#[derive(Clone, Copy)]
pub enum WeightKernel<'a> {
    /// `e^{-K(d)}` evaluated pointwise at differences `d = x - y`.
    Translation(&'a (dyn Fn(f64) -> f64 + Sync)),
    /// `e^{-K(d)} = d^2`, the log-repulsive case, integrated through the
    /// moment expansion `x^2 M0 - 2x M1 + M2`.
    SquaredDistance,
}

impl WeightKernel<'_> {
    #[inline]
    pub fn eval(&self, d: f64) -> f64 {
        match self {
            WeightKernel::Translation(k) => k(d),
            WeightKernel::SquaredDistance => d * d,
        }
    }
}

fn check_output(grid: &Grid, values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(ShmError::ConvolutionOverflow { x: grid.point(i) });
    }
    Ok(())
}

/// `x -> \int e^{-K(x-y)} g(y) dy` on the grid of `g`, by direct summation.
///
/// Each output point is summed sequentially in input order, so the result
/// does not depend on how rayon partitions the output range.
pub fn convolve_weight(g: &GridFunction, kernel: WeightKernel<'_>) -> Result<GridFunction> {
    let grid = g.grid;
    let n = grid.len();
    let w = grid.quadrature_weights();
    let wg: Vec<f64> = w.iter().zip(&g.values).map(|(a, b)| a * b).collect();
    let values: Vec<f64> = match kernel {
        WeightKernel::SquaredDistance => {
            let (m0, m1, m2) = moments012(&grid, &wg);
            (0..n)
                .map(|i| {
                    let x = grid.point(i);
                    x * x * m0 - 2.0 * x * m1 + m2
                })
                .collect()
        }
        WeightKernel::Translation(k) => {
            let table = difference_table(&grid, k);
            (0..n)
                .into_par_iter()
                .map(|i| {
                    // table[(i - j) + n - 1] = e^{-K(x_i - x_j)}
                    let row = &table[i..i + n];
                    row.iter().rev().zip(&wg).map(|(a, b)| a * b).sum()
                })
                .collect()
        }
    };
    check_output(&grid, &values)?;
    Ok(GridFunction { grid, values })
}

/// Same integral as [`convolve_weight`] through a zero-padded FFT linear
/// convolution. Only translation kernels are accelerated.
pub fn convolve_weight_fft(g: &GridFunction, kernel: WeightKernel<'_>) -> Result<GridFunction> {
    let k = match kernel {
        WeightKernel::SquaredDistance => return convolve_weight(g, kernel),
        WeightKernel::Translation(k) => k,
    };
    let grid = g.grid;
    let n = grid.len();
    let w = grid.quadrature_weights();
    let table = difference_table(&grid, k);
    let len = (3 * n - 2).next_power_of_two();
    let mut a = vec![Complex64::new(0.0, 0.0); len];
    for (j, (wj, gj)) in w.iter().zip(&g.values).enumerate() {
        a[j] = Complex64::new(wj * gj, 0.0);
    }
    let mut b = vec![Complex64::new(0.0, 0.0); len];
    for (j, t) in table.iter().enumerate() {
        b[j] = Complex64::new(*t, 0.0);
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    let scale = 1.0 / len as f64;
    let values: Vec<f64> = (0..n).map(|i| a[i + n - 1].re * scale).collect();
    check_output(&grid, &values)?;
    Ok(GridFunction { grid, values })
}

/// Evaluate the convolution integral at a single, possibly off-grid, point.
pub fn convolve_at(x: f64, g: &GridFunction, kernel: WeightKernel<'_>) -> Result<f64> {
    let grid = g.grid;
    let w = grid.quadrature_weights();
    let v = match kernel {
        WeightKernel::SquaredDistance => {
            let wg: Vec<f64> = w.iter().zip(&g.values).map(|(a, b)| a * b).collect();
            let (m0, m1, m2) = moments012(&grid, &wg);
            x * x * m0 - 2.0 * x * m1 + m2
        }
        WeightKernel::Translation(k) => (0..grid.len())
            .map(|j| w[j] * k(x - grid.point(j)) * g.values[j])
            .sum(),
    };
    if !v.is_finite() {
        return Err(ShmError::ConvolutionOverflow { x });
    }
    Ok(v)
}

fn moments012(grid: &Grid, wg: &[f64]) -> (f64, f64, f64) {
    let mut m = (0.0, 0.0, 0.0);
    for (j, a) in wg.iter().enumerate() {
        let y = grid.point(j);
        m.0 += a;
        m.1 += a * y;
        m.2 += a * y * y;
    }
    m
}

/// `table[k] = kernel((k - (n-1)) * step)` for `k in 0..2n-1`.
fn difference_table(grid: &Grid, kernel: &(dyn Fn(f64) -> f64 + Sync)) -> Vec<f64> {
    let n = grid.len() as isize;
    (-(n - 1)..n)
        .map(|d| kernel(d as f64 * grid.step()))
        .collect()
}

/// Evaluate a polynomial given by coefficients of decreasing degree.
pub fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, c| acc * x + c)
}

/// Bisection root of the polynomial with coefficients `coeffs` (highest
/// degree first) inside `[lo, hi]`.
pub fn find_root_bracketed(coeffs: &[f64], lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let mut pa = horner(coeffs, a);
    let pb = horner(coeffs, b);
    if pa == 0.0 {
        return Ok(a);
    }
    if pb == 0.0 {
        return Ok(b);
    }
    if !(pa * pb < 0.0) {
        return Err(ShmError::BracketInvalid {
            lo,
            hi,
            p_lo: pa,
            p_hi: pb,
        });
    }
    // 200 halvings exhaust f64 resolution on any finite bracket.
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if b - a <= tol || mid == a || mid == b {
            break;
        }
        let pm = horner(coeffs, mid);
        if pm == 0.0 {
            return Ok(mid);
        }
        if (pm < 0.0) == (pa < 0.0) {
            a = mid;
            pa = pm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Piecewise-linear CDF of a tabulated density, built once for repeated
/// inverse-CDF draws.
#[derive(Debug, Clone)]
pub struct TabulatedCdf {
    grid: Grid,
    cdf: Vec<f64>,
}

impl TabulatedCdf {
    pub fn new(density: &GridFunction) -> Result<Self> {
        Self::from_values(density.grid, &density.values)
    }

    pub fn from_values(grid: Grid, density: &[f64]) -> Result<Self> {
        let h = grid.step();
        let mut cdf = Vec::with_capacity(density.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in density.windows(2) {
            let (a, b) = (w[0].max(0.0), w[1].max(0.0));
            acc += 0.5 * h * (a + b);
            cdf.push(acc);
        }
        if !(acc > 0.0) || !acc.is_finite() {
            return Err(ShmError::ZeroMass);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        *cdf.last_mut().unwrap() = 1.0;
        Ok(TabulatedCdf { grid, cdf })
    }

    /// Smallest `x` with cumulative mass `u`.
    pub fn sample(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|&c| c < u);
        if k == 0 {
            return self.grid.lo();
        }
        if k >= self.cdf.len() {
            return self.grid.hi();
        }
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let t = (u - c0) / (c1 - c0);
        self.grid.point(k - 1) + t * self.grid.step()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.grid.lo() {
            return 0.0;
        }
        if x >= self.grid.hi() {
            return 1.0;
        }
        let (i, t) = self.grid.locate(x).expect("inside grid");
        self.cdf[i] * (1.0 - t) + self.cdf[i + 1] * t
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
}

/// Single inverse-CDF draw from a tabulated density.
pub fn inverse_cdf_sample(density: &GridFunction, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(ShmError::InvalidArgument(format!("u = {u} not in (0, 1)")));
    }
    Ok(TabulatedCdf::new(density)?.sample(u))
}
