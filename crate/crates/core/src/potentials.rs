//! The confinement `U` and the even pair interaction `K`, with derivatives
//! and the curvature constants used by the well-posedness condition.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ShmError};
use crate::numerics::{integrate, Grid, GridFunction, WeightKernel};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Tolerance for the evenness checks on `U` and `K`.
pub const EVENNESS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// `q x^2 / 2`
    Quadratic { coefficient: f64 },
    /// `-beta log|x|`; only `beta = 2` is constructed.
    LogRepulsive { beta: f64 },
    /// Linear interpolation of grid values, `+inf` off the grid.
    Tabulated,
    Custom,
}

/// A scalar potential together with its derivative and Boltzmann weight.
#[derive(Clone)]
pub struct Potential {
    kind: PotentialKind,
    value: ScalarFn,
    derivative: ScalarFn,
    boltzmann: ScalarFn,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential").field("kind", &self.kind).finish()
    }
}

impl Potential {
    pub fn quadratic(q: f64) -> Self {
        Potential {
            kind: PotentialKind::Quadratic { coefficient: q },
            value: Arc::new(move |x| q * x * x / 2.0),
            derivative: Arc::new(move |x| q * x),
            boltzmann: Arc::new(move |x| (-q * x * x / 2.0).exp()),
        }
    }

    /// `K(x) = -2 log|x|`, so that `e^{-K(x)} = x^2`.
    pub fn log_repulsive() -> Self {
        Potential {
            kind: PotentialKind::LogRepulsive { beta: 2.0 },
            value: Arc::new(|x: f64| -2.0 * x.abs().ln()),
            derivative: Arc::new(|x: f64| -2.0 / x),
            boltzmann: Arc::new(|x| x * x),
        }
    }

    pub fn custom(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let value: ScalarFn = Arc::new(value);
        let v = value.clone();
        Potential {
            kind: PotentialKind::Custom,
            value,
            derivative: Arc::new(derivative),
            boltzmann: Arc::new(move |x| (-v(x)).exp()),
        }
    }

    /// Polynomial `sum_k c_k x^k` (coefficients in increasing degree).
    pub fn polynomial(coefficients: Vec<f64>) -> Self {
        let deriv: Vec<f64> = coefficients
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| k as f64 * c)
            .collect();
        let eval = |c: &[f64], x: f64| c.iter().rev().fold(0.0, |acc, a| acc * x + a);
        Potential::custom(
            move |x| eval(&coefficients, x),
            move |x| eval(&deriv, x),
        )
    }

    /// Tabulated potential; values may be `+inf` (hard-core exclusion).
    pub fn tabulated(table: GridFunction) -> Self {
        let t = Arc::new(table);
        let (tv, td) = (t.clone(), t.clone());
        Potential {
            kind: PotentialKind::Tabulated,
            value: Arc::new(move |x| tv.interpolate(x).unwrap_or(f64::INFINITY)),
            derivative: Arc::new(move |x| {
                let h = td.grid.step();
                match (td.interpolate(x - h / 2.0), td.interpolate(x + h / 2.0)) {
                    (Some(a), Some(b)) if a.is_finite() && b.is_finite() => (b - a) / h,
                    _ => 0.0,
                }
            }),
            boltzmann: Arc::new(move |x| match t.interpolate(x) {
                Some(v) => (-v).exp(),
                None => 0.0,
            }),
        }
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        (self.derivative)(x)
    }

    /// `e^{-V(x)}`, evaluated without forming `V` for the log-repulsive kind.
    #[inline]
    pub fn boltzmann(&self, x: f64) -> f64 {
        (self.boltzmann)(x)
    }

    pub fn is_log_repulsive(&self) -> bool {
        matches!(self.kind, PotentialKind::LogRepulsive { .. })
    }

    /// Convolution weight `e^{-V}` for use in [`crate::numerics::convolve_weight`].
    pub fn weight_kernel(&self) -> WeightKernel<'_> {
        if self.is_log_repulsive() {
            WeightKernel::SquaredDistance
        } else {
            WeightKernel::Translation(&*self.boltzmann)
        }
    }

    /// Largest `|V(x) - V(-x)|` over the grid points.
    pub fn evenness_gap(&self, grid: &Grid) -> (f64, f64) {
        let mut worst = (0.0, 0.0);
        for i in 0..grid.len() {
            let x = grid.point(i);
            let (a, b) = (self.value(x), self.value(-x));
            let gap = if a == b { 0.0 } else { (a - b).abs() };
            if gap > worst.1 || gap.is_nan() {
                worst = (x, gap);
            }
        }
        worst
    }
}

/// Curvature constants `a = inf U''`, `b = inf K''`, `c = sup |K''|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureBounds {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `true` when obtained from second differences rather than analytically.
    pub estimated: bool,
}

#[derive(Debug, Clone)]
pub struct PotentialPair {
    pub confinement: Potential,
    pub interaction: Potential,
    pub curvature: Option<CurvatureBounds>,
}

impl PotentialPair {
    /// Pair with curvature bounds filled analytically for quadratic kinds,
    /// estimated by second differences for other smooth kinds, and left
    /// empty for the log-repulsive interaction.
    pub fn new(confinement: Potential, interaction: Potential, grid: &Grid) -> Self {
        let curvature = curvature_bounds(&confinement, &interaction, grid);
        PotentialPair {
            confinement,
            interaction,
            curvature,
        }
    }
}

fn curvature_bounds(u: &Potential, k: &Potential, grid: &Grid) -> Option<CurvatureBounds> {
    if k.is_log_repulsive() {
        return None;
    }
    match (u.kind(), k.kind()) {
        (PotentialKind::Quadratic { coefficient: a }, PotentialKind::Quadratic { coefficient: q }) => {
            Some(CurvatureBounds {
                a: *a,
                b: *q,
                c: q.abs(),
                estimated: false,
            })
        }
        _ => {
            let (a, _) = second_difference_range(u, grid.lo(), grid.hi(), grid.len());
            // K is evaluated on all pairwise differences of grid points.
            let width = grid.hi() - grid.lo();
            let (b, c) = second_difference_range(k, -width, width, 2 * grid.len() - 1);
            Some(CurvatureBounds {
                a,
                b,
                c,
                estimated: true,
            })
        }
    }
}

/// (min V'', max |V''|) over the interior of a uniform grid on `[lo, hi]`.
fn second_difference_range(v: &Potential, lo: f64, hi: f64, n: usize) -> (f64, f64) {
    let h = (hi - lo) / (n - 1) as f64;
    let vals: Vec<f64> = (0..n).map(|i| v.value(lo + i as f64 * h)).collect();
    let mut min = f64::INFINITY;
    let mut max_abs = 0.0_f64;
    for w in vals.windows(3) {
        let d2 = (w[0] - 2.0 * w[1] + w[2]) / (h * h);
        if d2.is_finite() {
            min = min.min(d2);
            max_abs = max_abs.max(d2.abs());
        }
    }
    (min, max_abs)
}

/// Degree `m` of the tree, the potentials, and the discretization grid.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub m: usize,
    pub potentials: PotentialPair,
    pub grid: Grid,
}

impl ModelConfig {
    pub fn new(m: usize, potentials: PotentialPair, grid: Grid) -> Result<Self> {
        if m < 2 {
            return Err(ShmError::InvalidArgument(format!("m must be >= 2, got {m}")));
        }
        let (x, gap) = potentials.interaction.evenness_gap(&grid);
        if gap > EVENNESS_TOL || gap.is_nan() {
            return Err(ShmError::InvalidArgument(format!(
                "K must be even (|K(x) - K(-x)| = {gap:e} at x = {x})"
            )));
        }
        for i in 0..grid.len() {
            let x = grid.point(i);
            let eu = potentials.confinement.boltzmann(x);
            let ek = potentials.interaction.boltzmann(x);
            if !(eu.is_finite() && eu >= 0.0 && ek.is_finite() && ek >= 0.0) {
                return Err(ShmError::InvalidArgument(format!(
                    "e^-U or e^-K not a finite non-negative real at x = {x}"
                )));
            }
        }
        Ok(ModelConfig { m, potentials, grid })
    }

    pub fn u(&self) -> &Potential {
        &self.potentials.confinement
    }

    pub fn k(&self) -> &Potential {
        &self.potentials.interaction
    }

    pub fn with_grid(self, grid: Grid) -> Result<Self> {
        let pair = PotentialPair::new(
            self.potentials.confinement,
            self.potentials.interaction,
            &grid,
        );
        ModelConfig::new(self.m, pair, grid)
    }

    /// `s_k = \int x^k e^{-U(x)} dx` for `k = 0..=max_order`.
    pub fn confinement_moments(&self, max_order: usize) -> Result<Vec<f64>> {
        (0..=max_order)
            .map(|k| {
                let f = GridFunction::from_fn(self.grid, |x| {
                    x.powi(k as i32) * self.u().boltzmann(x)
                });
                integrate(&f)
            })
            .collect()
    }
}

/// Quadratic confinement `(z - m) x^2 / 2` and interaction `x^2 / 2`.
pub fn make_linear_model(m: usize, z: f64) -> Result<ModelConfig> {
    make_linear_model_on(m, z, Grid::default())
}

pub fn make_linear_model_on(m: usize, z: f64, grid: Grid) -> Result<ModelConfig> {
    if m < 2 {
        return Err(ShmError::InvalidArgument(format!("m must be >= 2, got {m}")));
    }
    let pair = PotentialPair::new(
        Potential::quadratic(z - m as f64),
        Potential::quadratic(1.0),
        &grid,
    );
    ModelConfig::new(m, pair, grid)
}

/// Even confinement `U` with the `beta = 2` log-repulsive interaction.
pub fn make_dyson_model(m: usize, u: Potential) -> Result<ModelConfig> {
    make_dyson_model_on(m, u, Grid::default())
}

pub fn make_dyson_model_on(m: usize, u: Potential, grid: Grid) -> Result<ModelConfig> {
    let (x, gap) = u.evenness_gap(&grid);
    if gap > EVENNESS_TOL || gap.is_nan() {
        return Err(ShmError::OddConfinement { x, gap });
    }
    let pair = PotentialPair::new(u, Potential::log_repulsive(), &grid);
    let cfg = ModelConfig::new(m, pair, grid)?;
    let moments = cfg.confinement_moments(2 * m)?;
    if moments.iter().any(|s| !s.is_finite()) || !(moments[0] > 0.0) {
        return Err(ShmError::NonFiniteIntegrand);
    }
    Ok(cfg)
}

/// `U(x) = q x^2 / 2` with no interaction (`K = 0`).
pub fn make_independent_model(m: usize, q: f64) -> Result<ModelConfig> {
    let grid = Grid::default();
    let pair = PotentialPair::new(Potential::quadratic(q), Potential::quadratic(0.0), &grid);
    ModelConfig::new(m, pair, grid)
}

/// Result of checking `ess inf U'' > m (sup|K''| - ess inf K'')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessCheck {
    pub holds: bool,
    pub margin: Option<f64>,
    pub estimated: bool,
    pub reason: Option<String>,
}

pub fn check_uniqueness_condition(cfg: &ModelConfig) -> UniquenessCheck {
    match cfg.potentials.curvature {
        None => UniquenessCheck {
            holds: false,
            margin: None,
            estimated: false,
            reason: Some(ShmError::CurvatureUnavailable.to_string()),
        },
        Some(CurvatureBounds { a, b, c, estimated }) => {
            let margin = a - cfg.m as f64 * (c - b);
            UniquenessCheck {
                holds: margin > 0.0,
                margin: Some(margin),
                estimated,
                reason: None,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_model_coefficients() {
        let cfg = make_linear_model(3, 4.0).unwrap();
        assert_eq!(cfg.u().value(2.0), 2.0);
        assert_eq!(cfg.k().value(2.0), 2.0);
        assert_eq!(cfg.u().derivative(1.5), 1.5);
        let cb = cfg.potentials.curvature.unwrap();
        assert_eq!((cb.a, cb.b, cb.c, cb.estimated), (1.0, 1.0, 1.0, false));

        let flat = make_linear_model(2, 2.0).unwrap();
        assert_eq!(flat.u().value(3.0), 0.0);
        assert_eq!(flat.potentials.curvature.unwrap().a, 0.0);

        let nonconvex = make_linear_model(3, 2.9).unwrap();
        assert!((nonconvex.u().value(1.0) + 0.05).abs() < 1e-15);
        assert!(make_linear_model(1, 3.0).is_err());
    }

    #[test]
    fn dyson_model_construction() {
        let cfg = make_dyson_model(2, Potential::quadratic(1.0)).unwrap();
        assert!(cfg.potentials.curvature.is_none());
        assert_eq!(cfg.k().kind(), &PotentialKind::LogRepulsive { beta: 2.0 });
        let s = cfg.confinement_moments(4).unwrap();
        assert!((s[4] / s[0] - 3.0).abs() < 1e-10);
        assert!(make_dyson_model(3, Potential::quadratic(1.0)).is_ok());
        let quartic = Potential::polynomial(vec![0.0, 0.0, 0.0, 0.0, 0.25]);
        assert!(make_dyson_model(2, quartic).is_ok());
    }

    #[test]
    fn dyson_rejects_odd_confinement() {
        let u = Potential::polynomial(vec![0.0, 0.3, 0.5]);
        match make_dyson_model(2, u) {
            Err(ShmError::OddConfinement { gap, .. }) => assert!(gap > 1e-9),
            other => panic!("expected odd-U error, got {other:?}"),
        }
    }

    #[test]
    fn log_repulsive_weight_is_exact_at_zero() {
        let k = Potential::log_repulsive();
        assert_eq!(k.boltzmann(0.0), 0.0);
        assert_eq!(k.boltzmann(-3.0), 9.0);
    }

    #[test]
    fn uniqueness_condition_examples() {
        let c = check_uniqueness_condition(&make_linear_model(3, 4.0).unwrap());
        assert!(c.holds);
        assert_eq!(c.margin, Some(1.0));
        let c = check_uniqueness_condition(&make_linear_model(3, 2.9).unwrap());
        assert!(!c.holds);
        assert!((c.margin.unwrap() + 0.1).abs() < 1e-12);
        let c = check_uniqueness_condition(&make_dyson_model(2, Potential::quadratic(1.0)).unwrap());
        assert!(!c.holds);
        assert_eq!(c.reason.as_deref(), Some("curvature unavailable"));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let grid = Grid::default();
        let cfg = make_linear_model(3, 4.5).unwrap();
        let h = 1e-5;
        for p in [cfg.u(), cfg.k()] {
            for i in (0..grid.len()).step_by(37) {
                let x = grid.point(i);
                let fd = (p.value(x + h) - p.value(x - h)) / (2.0 * h);
                assert!((fd - p.derivative(x)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn interaction_is_exactly_even_on_symmetric_grid() {
        let grid = Grid::default();
        for p in [Potential::quadratic(1.0), Potential::log_repulsive()] {
            assert_eq!(p.evenness_gap(&grid).1, 0.0);
        }
    }

    #[test]
    fn estimated_curvature_for_polynomial_kinds() {
        let grid = Grid::symmetric(4.0, 401).unwrap();
        // U = x^2 + x^4/12 has U'' = 2 + x^2 >= 2; K = x^2/2 written as a polynomial
        let pair = PotentialPair::new(
            Potential::polynomial(vec![0.0, 0.0, 1.0, 0.0, 1.0 / 12.0]),
            Potential::polynomial(vec![0.0, 0.0, 0.5]),
            &grid,
        );
        let cb = pair.curvature.unwrap();
        assert!(cb.estimated);
        assert!((cb.a - 2.0).abs() < 1e-3);
        assert!((cb.b - 1.0).abs() < 1e-6 && (cb.c - 1.0).abs() < 1e-6);
    }

    #[test]
    fn tabulated_potential_allows_hard_core() {
        let grid = Grid::symmetric(2.0, 41).unwrap();
        let table = GridFunction::from_fn(grid, |x| if x.abs() > 1.5 { f64::INFINITY } else { x * x });
        let u = Potential::tabulated(table);
        assert_eq!(u.boltzmann(1.8), 0.0);
        assert!((u.boltzmann(1.0) - (-1.0f64).exp()).abs() < 1e-12);
        assert!((u.derivative(0.5) - 1.0).abs() < 1e-9);
        assert_eq!(u.boltzmann(5.0), 0.0);
    }
}
