//! Closed forms: the Gaussian (linear) case, the tree resolvent and
//! Kesten-McKay law, and the `beta = 2` Dyson case.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ShmError};
use crate::fixed_point::FixedPointSolution;
use crate::numerics::{convolve_weight, find_root_bracketed, integrate, GridFunction};
use crate::potentials::ModelConfig;

/// Width of the collar treated as equality at `z = m` and `z = 2 sqrt(m-1)`.
pub const REGIME_COLLAR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `z > m`: one solution, the `+` branch.
    I,
    /// `z = m > 2`: one solution, `rho = 1/(m-1)`.
    Ii,
    /// `2 sqrt(m-1) < z < m`: both branches.
    Iii,
    /// `z = 2 sqrt(m-1)`, `m != 2`: one solution at the spectral edge.
    Iv,
    /// No Gaussian solution.
    V,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::I => "i",
            Regime::Ii => "ii",
            Regime::Iii => "iii",
            Regime::Iv => "iv",
            Regime::V => "v",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCaseReport {
    pub m: usize,
    pub z: f64,
    pub regime: Regime,
    pub sigma2_plus: Option<f64>,
    pub rho_plus: Option<f64>,
    pub sigma2_minus: Option<f64>,
    pub rho_minus: Option<f64>,
    pub resolvent: Option<f64>,
    pub extendable_plus: Option<bool>,
    pub extendable_minus: Option<bool>,
}

pub fn spectral_edge(m: usize) -> f64 {
    2.0 * ((m - 1) as f64).sqrt()
}

/// `|rho| < 1/sqrt(m-1)`.
pub fn is_extendable(m: usize, rho: f64) -> bool {
    rho.abs() < 1.0 / ((m - 1) as f64).sqrt() - REGIME_COLLAR
}

pub fn classify(m: usize, z: f64) -> Regime {
    let mf = m as f64;
    let edge = spectral_edge(m);
    if (z - mf).abs() <= REGIME_COLLAR {
        if m == 2 {
            Regime::V
        } else {
            Regime::Ii
        }
    } else if z > mf {
        Regime::I
    } else if (z - edge).abs() <= REGIME_COLLAR {
        if m == 2 {
            Regime::V
        } else {
            Regime::Iv
        }
    } else if z > edge {
        Regime::Iii
    } else {
        Regime::V
    }
}

fn sigma2_for(m: usize, z: f64, rho: f64) -> f64 {
    1.0 / (z - m as f64 * rho)
}

/// Solutions `(sigma^2, rho)` of `(m-1) rho^2 - z rho + 1 = 0`,
/// `sigma^2 (z - m rho) = 1`, classified by regime.
pub fn linear_report(m: usize, z: f64) -> LinearCaseReport {
    let regime = if m < 2 { Regime::V } else { classify(m, z) };
    let mut report = LinearCaseReport {
        m,
        z,
        regime,
        sigma2_plus: None,
        rho_plus: None,
        sigma2_minus: None,
        rho_minus: None,
        resolvent: None,
        extendable_plus: None,
        extendable_minus: None,
    };
    if m < 2 {
        return report;
    }
    let mf = m as f64;
    let a = (m - 1) as f64;
    let disc = (z * z - 4.0 * a).max(0.0).sqrt();
    let plus = |r: &mut LinearCaseReport, rho: f64| {
        r.rho_plus = Some(rho);
        r.sigma2_plus = Some(sigma2_for(m, z, rho));
        r.extendable_plus = Some(is_extendable(m, rho));
    };
    match regime {
        Regime::I => plus(&mut report, (z - disc) / (2.0 * a)),
        Regime::Ii => {
            // the `-` root would make z - m rho vanish
            let rho = 1.0 / a;
            report.rho_plus = Some(rho);
            report.sigma2_plus = Some(a / (mf * (mf - 2.0)));
            report.extendable_plus = Some(is_extendable(m, rho));
        }
        Regime::Iii => {
            plus(&mut report, (z - disc) / (2.0 * a));
            let rho = (z + disc) / (2.0 * a);
            report.rho_minus = Some(rho);
            report.sigma2_minus = Some(sigma2_for(m, z, rho));
            report.extendable_minus = Some(is_extendable(m, rho));
        }
        Regime::Iv => {
            let s = a.sqrt();
            report.rho_plus = Some(1.0 / s);
            report.sigma2_plus = Some(1.0 / (s - 1.0 / s));
            report.extendable_plus = Some(false);
        }
        Regime::V => {}
    }
    if z > spectral_edge(m) + REGIME_COLLAR {
        report.resolvent = resolvent(m, z).ok();
    }
    report
}

/// `<e_v, (z - A)^{-1} e_v>` on the `m`-regular tree.
pub fn resolvent(m: usize, z: f64) -> Result<f64> {
    if m < 2 {
        return Err(ShmError::InvalidArgument(format!("m must be >= 2, got {m}")));
    }
    let edge = spectral_edge(m);
    if !(z > edge) {
        return Err(ShmError::InSpectrum { z, edge });
    }
    let mf = m as f64;
    let a = (m - 1) as f64;
    Ok(2.0 * a / ((mf - 2.0) * z + mf * (z * z - 4.0 * a).sqrt()))
}

pub fn kesten_mckay_density(m: usize, x: f64) -> f64 {
    let mf = m as f64;
    let inner = 4.0 * (mf - 1.0) - x * x;
    if inner <= 0.0 || m < 2 {
        return 0.0;
    }
    mf * inner.sqrt() / (2.0 * PI * (mf * mf - x * x))
}

/// Default node count for Kesten-McKay quadrature.
pub const KM_NODES: usize = 4096;

/// Nodes and weights of `\int g d mu` after `x = R cos(theta)`: midpoint
/// rule in `theta`, so the endpoint behaviour of the density is absorbed.
pub fn kesten_mckay_nodes(m: usize, nodes: usize) -> Result<Vec<(f64, f64)>> {
    if m < 2 {
        return Err(ShmError::InvalidArgument(format!("m must be >= 2, got {m}")));
    }
    let mf = m as f64;
    let r = spectral_edge(m);
    let h = PI / nodes as f64;
    Ok((0..nodes)
        .map(|i| {
            let th = (i as f64 + 0.5) * h;
            let (s, c) = th.sin_cos();
            let w = mf * r * r * s * s / (2.0 * PI * (mf * mf - r * r * c * c)) * h;
            (r * c, w)
        })
        .collect())
}

pub fn kesten_mckay_integral(m: usize, g: impl Fn(f64) -> f64, nodes: usize) -> Result<f64> {
    Ok(kesten_mckay_nodes(m, nodes)?
        .into_iter()
        .map(|(x, w)| w * g(x))
        .sum())
}

/// Tabulated curve `(x, density, mass)` on the quadrature nodes; `mass`
/// sums to the total measure.
pub fn kesten_mckay_curve(m: usize, nodes: usize) -> Result<Vec<(f64, f64, f64)>> {
    let mut rows: Vec<(f64, f64, f64)> = kesten_mckay_nodes(m, nodes)?
        .into_iter()
        .map(|(x, w)| (x, kesten_mckay_density(m, x), w))
        .collect();
    rows.reverse();
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StieltjesCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub err: f64,
}

pub fn stieltjes_check(m: usize, z: f64) -> Result<StieltjesCheck> {
    let rhs = resolvent(m, z)?;
    let lhs = kesten_mckay_integral(m, |x| 1.0 / (z - x), KM_NODES)?;
    Ok(StieltjesCheck {
        lhs,
        rhs,
        err: (lhs - rhs).abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DysonReport {
    pub m: usize,
    /// `s_0..s_{2m}`.
    pub moments: Vec<f64>,
    /// Coefficients of `r^m, r^{m-1}, ..., r^0`.
    pub poly_coeffs: Vec<f64>,
    pub sign_changes: usize,
    pub r: f64,
    pub lambda: f64,
    /// Fixed-point residual of `F = -log(x^2 + r)` after gauging.
    pub residual: f64,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `sum_j ((m - 2j)/m) C(m, j) s_{2j} r^{m-j}`, highest degree first.
pub fn dyson_polynomial(m: usize, moments: &[f64]) -> Result<Vec<f64>> {
    if moments.len() < 2 * m + 1 {
        return Err(ShmError::InvalidArgument(format!(
            "need moments s_0..s_{}, got {}",
            2 * m,
            moments.len()
        )));
    }
    let mf = m as f64;
    Ok((0..=m)
        .map(|j| (mf - 2.0 * j as f64) / mf * binomial(m, j) * moments[2 * j])
        .collect())
}

pub fn sign_changes(coeffs: &[f64]) -> usize {
    let signs: Vec<bool> = coeffs.iter().filter(|c| **c != 0.0).map(|c| *c > 0.0).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Unique positive root, bracketed by `[0, 1 + max |c_i / c_0|]`.
pub fn dyson_root(coeffs: &[f64]) -> Result<f64> {
    let changes = sign_changes(coeffs);
    if changes != 1 {
        return Err(ShmError::SignPattern { changes });
    }
    let lead = coeffs[0];
    let bound = 1.0 + coeffs[1..].iter().map(|c| (c / lead).abs()).fold(0.0, f64::max);
    find_root_bracketed(coeffs, 0.0, bound, 1e-15 * bound)
}

pub fn dyson_report(cfg: &ModelConfig) -> Result<DysonReport> {
    if !cfg.k().is_log_repulsive() {
        return Err(ShmError::InvalidArgument(
            "dyson_report needs the log-repulsive interaction".into(),
        ));
    }
    let m = cfg.m;
    let moments = cfg.confinement_moments(2 * m)?;
    let poly_coeffs = dyson_polynomial(m, &moments)?;
    let sign_changes = sign_changes(&poly_coeffs);
    let r = dyson_root(&poly_coeffs)?;
    let weight =
        GridFunction::from_fn(cfg.grid, |y| (y * y + r).powi(m as i32 - 1) * cfg.u().boltzmann(y));
    let lambda = integrate(&weight)?;
    let residual = FixedPointSolution::from_fn(cfg, |x| -(x * x + r).ln())?.residual;
    Ok(DysonReport {
        m,
        moments,
        poly_coeffs,
        sign_changes,
        r,
        lambda,
        residual,
    })
}

/// Marginal `rho_X` of the Dyson edge law for root `r`, normalized on the
/// model grid.
pub fn dyson_marginal(cfg: &ModelConfig, r: f64) -> Result<GridFunction> {
    let m = cfg.m as i32;
    let g = GridFunction::from_fn(cfg.grid, |y| (y * y + r).powi(m - 1) * cfg.u().boltzmann(y));
    let inner = convolve_weight(&g, cfg.k().weight_kernel())?;
    let unnorm = GridFunction::from_fn(cfg.grid, |x| (x * x + r).powi(m - 1) * cfg.u().boltzmann(x))
        .zip_map(&inner, |a, b| a * b);
    let z = integrate(&unnorm)?;
    if !(z > 0.0) {
        return Err(ShmError::ZeroMass);
    }
    Ok(unnorm.map(|v| v / z))
}
