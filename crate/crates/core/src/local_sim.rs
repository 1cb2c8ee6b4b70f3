//! Particle simulation of the local equation for a single edge `(X, Y)`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edge_law::EdgeLaw;
use crate::error::{Result, ShmError};
use crate::fixed_point::FixedPointSolution;
use crate::numerics::{GridFunction, TabulatedCdf};
use crate::potentials::ModelConfig;
use crate::stats;
use crate::tree::{interaction_force, TreeBall, TreeSampler, DEFAULT_CLIP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    /// `E[K'(X - Y) | X]` replaced by `F'(X)` from a solved fixed point.
    Decoupled,
    /// `E[K'(X - Y) | X]` estimated from the ensemble by kernel regression.
    Estimated,
}

impl std::str::FromStr for SimMode {
    type Err = ShmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decoupled" => Ok(SimMode::Decoupled),
            "estimated" => Ok(SimMode::Estimated),
            other => Err(ShmError::InvalidArgument(format!(
                "unknown mode '{other}' (expected decoupled or estimated)"
            ))),
        }
    }
}

pub const MIN_REGRESSION_PARTICLES: usize = 100;
pub const REGRESSION_BINS: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub time: f64,
    pub mode: SimMode,
    pub bandwidth: Option<f64>,
}

impl ParticleEnsemble {
    pub fn new(x: Vec<f64>, y: Vec<f64>, mode: SimMode) -> Result<Self> {
        if x.len() != y.len() {
            return Err(ShmError::InvalidArgument("X and Y lengths differ".into()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(ShmError::InvalidArgument("particle values must be finite".into()));
        }
        let mut ens = ParticleEnsemble {
            x,
            y,
            time: 0.0,
            mode,
            bandwidth: None,
        };
        if mode == SimMode::Estimated {
            ens.bandwidth = Some(ens.default_bandwidth());
        }
        Ok(ens)
    }

    /// `N` pairs drawn i.i.d. from the edge law: `X` from the marginal, then
    /// `Y` from the conditional kernel.
    pub fn from_edge_law<R: Rng + ?Sized>(
        law: &EdgeLaw,
        n: usize,
        mode: SimMode,
        rng: &mut R,
    ) -> Result<Self> {
        let sampler = TreeSampler::new(law)?;
        let ball = Arc::new(TreeBall::new(law.m(), 0)?);
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let xi = sampler.sample(&ball, rng).values[0];
            x.push(xi);
            y.push(sampler.sample_child(xi, rng));
        }
        Self::new(x, y, mode)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `N^{-1/5}` times the standard deviation of the pooled `X` and `Y`.
    pub fn default_bandwidth(&self) -> f64 {
        let pooled: Vec<f64> = self.x.iter().chain(&self.y).copied().collect();
        let sd = if pooled.len() > 1 { stats::variance(&pooled).sqrt() } else { 1.0 };
        let h = (self.len().max(1) as f64).powf(-0.2) * sd;
        if h > 0.0 {
            h
        } else {
            1e-3
        }
    }

    pub fn with_bandwidth(mut self, h: f64) -> Self {
        self.bandwidth = Some(h);
        self
    }

    pub fn swapped(&self) -> Self {
        ParticleEnsemble {
            x: self.y.clone(),
            y: self.x.clone(),
            ..self.clone()
        }
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.x.iter().copied().zip(self.y.iter().copied()).collect()
    }
}

/// Binned Nadaraya-Watson regression with a Gaussian kernel, tabulated on
/// an even lattice spanning the data.
#[derive(Debug, Clone, PartialEq)]
pub struct NadarayaWatson {
    lo: f64,
    step: f64,
    values: Vec<f64>,
}

impl NadarayaWatson {
    /// Accumulation runs over the points in sorted order, so the estimate
    /// does not depend on the order in which the points are given.
    pub fn fit(points: &[(f64, f64)], bandwidth: f64, bins: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(ShmError::InsufficientSamples { got: 0, need: 1 });
        }
        if !(bandwidth > 0.0) {
            return Err(ShmError::InvalidArgument("bandwidth must be positive".into()));
        }
        let bins = bins.max(2);
        let mut sorted = points.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let lo = sorted[0].0;
        let hi = sorted[sorted.len() - 1].0;
        let span = (hi - lo).max(bandwidth);
        let step = span / (bins - 1) as f64;
        let mut mass = vec![0.0; bins];
        let mut moment = vec![0.0; bins];
        for &(x, v) in &sorted {
            let p = ((x - lo) / step).clamp(0.0, (bins - 1) as f64);
            let j = (p.floor() as usize).min(bins - 2);
            let t = p - j as f64;
            mass[j] += 1.0 - t;
            mass[j + 1] += t;
            moment[j] += (1.0 - t) * v;
            moment[j + 1] += t * v;
        }
        let reach = ((6.0 * bandwidth / step).ceil() as usize).min(bins - 1);
        let kernel: Vec<f64> = (0..=reach)
            .map(|d| (-0.5 * (d as f64 * step / bandwidth).powi(2)).exp())
            .collect();
        let values = (0..bins)
            .map(|b| {
                let (mut num, mut den) = (0.0, 0.0);
                for c in b.saturating_sub(reach)..=(b + reach).min(bins - 1) {
                    let w = kernel[b.abs_diff(c)];
                    num += w * moment[c];
                    den += w * mass[c];
                }
                if den > 0.0 {
                    num / den
                } else {
                    0.0
                }
            })
            .collect();
        Ok(NadarayaWatson { lo, step, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let last = self.values.len() - 1;
        let p = ((x - self.lo) / self.step).clamp(0.0, last as f64);
        let j = (p.floor() as usize).min(last - 1);
        let t = p - j as f64;
        (1.0 - t) * self.values[j] + t * self.values[j + 1]
    }
}

/// Regression of `K'(X - Y)` on `X`, pooling `(X, K'(X-Y))` with
/// `(Y, K'(Y-X))` so the estimate respects the symmetry of the edge.
pub fn estimate_conditional_force(
    cfg: &ModelConfig,
    ens: &ParticleEnsemble,
    bandwidth: f64,
    clip: f64,
) -> Result<NadarayaWatson> {
    if ens.len() < MIN_REGRESSION_PARTICLES {
        return Err(ShmError::EnsembleTooSmall(ens.len()));
    }
    let k = cfg.k();
    let points: Vec<(f64, f64)> = ens
        .x
        .iter()
        .zip(&ens.y)
        .flat_map(|(&x, &y)| {
            [
                (x, interaction_force(k, x - y, clip)),
                (y, interaction_force(k, y - x, clip)),
            ]
        })
        .collect();
    NadarayaWatson::fit(&points, bandwidth, REGRESSION_BINS)
}

enum Closure<'a> {
    Decoupled(&'a GridFunction),
    Estimated(NadarayaWatson),
}

impl Closure<'_> {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Closure::Decoupled(fp) => fp.interpolate_extrapolate(x),
            Closure::Estimated(nw) => nw.eval(x),
        }
    }
}

/// Stepper holding the pieces that do not change between steps.
pub struct LocalStepper<'a> {
    cfg: &'a ModelConfig,
    f_prime: Option<GridFunction>,
    clip: f64,
}

impl<'a> LocalStepper<'a> {
    pub fn new(cfg: &'a ModelConfig, sol: Option<&FixedPointSolution>) -> Self {
        LocalStepper {
            cfg,
            f_prime: sol.map(|s| s.derivative()),
            clip: DEFAULT_CLIP,
        }
    }

    pub fn with_clip(mut self, clip: f64) -> Self {
        self.clip = clip;
        self
    }

    /// One Euler-Maruyama step with caller-supplied standard normals.
    pub fn step_with_noise(
        &self,
        ens: &ParticleEnsemble,
        dt: f64,
        noise_x: &[f64],
        noise_y: &[f64],
    ) -> Result<ParticleEnsemble> {
        if !(dt > 0.0) {
            return Err(ShmError::InvalidArgument("dt must be positive".into()));
        }
        let n = ens.len();
        if noise_x.len() != n || noise_y.len() != n {
            return Err(ShmError::InvalidArgument("noise length differs from N".into()));
        }
        let closure = match ens.mode {
            SimMode::Decoupled => Closure::Decoupled(self.f_prime.as_ref().ok_or_else(|| {
                ShmError::InvalidArgument("decoupled mode needs a fixed-point solution".into())
            })?),
            SimMode::Estimated => {
                let h = ens.bandwidth.unwrap_or_else(|| ens.default_bandwidth());
                Closure::Estimated(estimate_conditional_force(self.cfg, ens, h, self.clip)?)
            }
        };
        let (u, k) = (self.cfg.u(), self.cfg.k());
        let wired = (self.cfg.m - 1) as f64;
        let scale = (2.0 * dt).sqrt();
        let (x, y): (Vec<f64>, Vec<f64>) = (0..n)
            .into_par_iter()
            .map(|i| {
                let (xi, yi) = (ens.x[i], ens.y[i]);
                let fx = interaction_force(k, xi - yi, self.clip);
                let fy = interaction_force(k, yi - xi, self.clip);
                let dx = u.derivative(xi) + fx + wired * closure.eval(xi);
                let dy = u.derivative(yi) + fy + wired * closure.eval(yi);
                (xi - dx * dt + scale * noise_x[i], yi - dy * dt + scale * noise_y[i])
            })
            .unzip();
        Ok(ParticleEnsemble {
            x,
            y,
            time: ens.time + dt,
            mode: ens.mode,
            bandwidth: ens.bandwidth,
        })
    }

    /// Draws `N` normals for `X`, then `N` for `Y`.
    pub fn step<R: Rng + ?Sized>(
        &self,
        ens: &ParticleEnsemble,
        dt: f64,
        rng: &mut R,
    ) -> Result<ParticleEnsemble> {
        let n = ens.len();
        let nx: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let ny: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        self.step_with_noise(ens, dt, &nx, &ny)
    }
}

pub fn step_local<R: Rng + ?Sized>(
    cfg: &ModelConfig,
    ens: &ParticleEnsemble,
    sol: Option<&FixedPointSolution>,
    dt: f64,
    rng: &mut R,
) -> Result<ParticleEnsemble> {
    LocalStepper::new(cfg, sol).step(ens, dt, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub time: f64,
    pub mean_x: f64,
    pub var_x: f64,
    pub cov_xy: f64,
    pub ks: f64,
}

impl TrajectoryRow {
    pub fn observe(ens: &ParticleEnsemble, marginal: &TabulatedCdf) -> Self {
        TrajectoryRow {
            time: ens.time,
            mean_x: stats::mean(&ens.x),
            var_x: stats::variance(&ens.x),
            cov_xy: stats::covariance(&ens.x, &ens.y),
            ks: stats::ks_one_sample(&ens.x, |v| marginal.cdf(v)),
        }
    }
}

/// Evolve `ens` to `t_end`, recording `records` evenly spaced summary rows
/// (plus the initial state).
#[allow(clippy::too_many_arguments)]
pub fn evolve<R: Rng + ?Sized>(
    cfg: &ModelConfig,
    sol: Option<&FixedPointSolution>,
    ens: ParticleEnsemble,
    dt: f64,
    t_end: f64,
    records: usize,
    marginal: &TabulatedCdf,
    rng: &mut R,
) -> Result<(ParticleEnsemble, Vec<TrajectoryRow>)> {
    if !(dt > 0.0) {
        return Err(ShmError::InvalidArgument("dt must be positive".into()));
    }
    let steps = (t_end / dt).round() as usize;
    let records = records.max(1);
    let stepper = LocalStepper::new(cfg, sol);
    let mut rows = vec![TrajectoryRow::observe(&ens, marginal)];
    let mut next = 1;
    let mut ens = ens;
    for s in 1..=steps {
        ens = stepper.step(&ens, dt, rng)?;
        if next <= records && s == next * steps / records {
            rows.push(TrajectoryRow::observe(&ens, marginal));
            next += 1;
        }
    }
    Ok((ens, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub mode: SimMode,
    pub bandwidth: Option<f64>,
    pub ks_marginal: f64,
    pub symmetry_ks: f64,
    pub trajectory: Vec<TrajectoryRow>,
}

pub const MIN_STATIONARITY_PARTICLES: usize = 1000;

/// Start `N` pairs from the edge law, evolve to `t_end`, and compare the
/// final `X` marginal with the edge-law marginal.
#[allow(clippy::too_many_arguments)]
pub fn run_stationarity_test(
    cfg: &ModelConfig,
    sol: &FixedPointSolution,
    law: &EdgeLaw,
    n: usize,
    dt: f64,
    t_end: f64,
    mode: SimMode,
    bandwidth: Option<f64>,
    seed: u64,
) -> Result<StationarityReport> {
    if n < MIN_STATIONARITY_PARTICLES {
        return Err(ShmError::InsufficientSamples {
            got: n,
            need: MIN_STATIONARITY_PARTICLES,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ens = ParticleEnsemble::from_edge_law(law, n, mode, &mut rng)?;
    if let Some(h) = bandwidth {
        ens = ens.with_bandwidth(h);
    }
    let marginal = TabulatedCdf::new(&law.rho_x)?;
    let (fin, trajectory) = evolve(cfg, Some(sol), ens, dt, t_end, 10, &marginal, &mut rng)?;
    let pairs = fin.pairs();
    let swapped = fin.swapped().pairs();
    Ok(StationarityReport {
        n,
        dt,
        t_end,
        mode,
        bandwidth: fin.bandwidth,
        ks_marginal: stats::ks_one_sample(&fin.x, |v| marginal.cdf(v)),
        symmetry_ks: stats::ks_two_sample_2d(&pairs, &swapped, stats::KS2D_LATTICE),
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge_law::build_edge_law;
    use crate::potentials::make_linear_model;
    use crate::potentials::{make_dyson_model, make_independent_model, Potential};

    const RHO_PLUS: f64 = 0.292_893_218_813_452_5;
    const SIGMA2_PLUS: f64 = 0.320_377_241_036_233_4;

    fn linear() -> (ModelConfig, FixedPointSolution, EdgeLaw) {
        let cfg = make_linear_model(3, 4.0).unwrap();
        let sol = FixedPointSolution::from_fn(&cfg, |x| (1.0 - RHO_PLUS) * x * x / 2.0).unwrap();
        let law = build_edge_law(&cfg, &sol).unwrap();
        (cfg, sol, law)
    }

    #[test]
    fn one_decoupled_step_keeps_marginal() {
        let (cfg, sol, law) = linear();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ens = ParticleEnsemble::from_edge_law(&law, 10_000, SimMode::Decoupled, &mut rng).unwrap();
        let next = step_local(&cfg, &ens, Some(&sol), 1e-3, &mut rng).unwrap();
        let cdf = TabulatedCdf::new(&law.rho_x).unwrap();
        assert!(stats::ks_one_sample(&next.x, |v| cdf.cdf(v)) < 0.02);
        assert!((next.time - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn initial_pairs_have_edge_correlation() {
        let (_, _, law) = linear();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ens = ParticleEnsemble::from_edge_law(&law, 50_000, SimMode::Decoupled, &mut rng).unwrap();
        let r = stats::correlation(&ens.x, &ens.y);
        assert!((r - RHO_PLUS).abs() < 4.0 * stats::correlation_se(r, 50_000), "{r}");
        assert!((stats::variance(&ens.x) - SIGMA2_PLUS).abs() < 0.01);
    }

    #[test]
    fn validation_errors() {
        let (cfg, _, law) = linear();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let small = ParticleEnsemble::new(vec![0.0; 50], vec![0.0; 50], SimMode::Estimated).unwrap();
        let err = step_local(&cfg, &small, None, 1e-3, &mut rng).unwrap_err();
        assert_eq!(err, ShmError::EnsembleTooSmall(50));
        assert!(err.to_string().contains("ensemble too small for regression"));
        let dec = ParticleEnsemble::new(vec![0.0; 5], vec![0.0; 5], SimMode::Decoupled).unwrap();
        assert!(step_local(&cfg, &dec, None, 1e-3, &mut rng).is_err());
        let ens = ParticleEnsemble::from_edge_law(&law, 200, SimMode::Estimated, &mut rng).unwrap();
        let e = step_local(&cfg, &ens, None, 0.0, &mut rng).unwrap_err();
        assert!(e.to_string().contains("dt must be positive"));
        assert!(ParticleEnsemble::new(vec![f64::NAN], vec![0.0], SimMode::Decoupled).is_err());
    }

    #[test]
    fn estimated_regression_tracks_smoothed_oracle() {
        let (cfg, _, law) = linear();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = 0.2;
        let ens = ParticleEnsemble::from_edge_law(&law, 10_000, SimMode::Estimated, &mut rng)
            .unwrap()
            .with_bandwidth(h);
        let stepper = LocalStepper::new(&cfg, None);
        let mut ens = ens;
        for _ in 0..1000 {
            ens = stepper.step(&ens, 1e-3, &mut rng).unwrap();
        }
        let nw = estimate_conditional_force(&cfg, &ens, h, DEFAULT_CLIP).unwrap();
        // Gaussian-kernel regression of a linear conditional mean under a
        // Gaussian design shrinks the slope by sigma^2 / (sigma^2 + h^2).
        let var = stats::variance(&ens.x.iter().chain(&ens.y).copied().collect::<Vec<_>>());
        let slope = (1.0 - RHO_PLUS) * var / (var + h * h);
        let worst = (-200..=200)
            .map(|i| i as f64 / 100.0)
            .map(|x| (nw.eval(x) - slope * x).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.05, "{worst}");
    }

    #[test]
    fn nadaraya_watson_is_order_invariant() {
        let pts: Vec<(f64, f64)> = (0..500).map(|i| ((i as f64 * 0.37).sin(), i as f64 * 0.01)).collect();
        let mut rev = pts.clone();
        rev.reverse();
        let a = NadarayaWatson::fit(&pts, 0.1, 128).unwrap();
        let b = NadarayaWatson::fit(&rev, 0.1, 128).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn estimated_step_commutes_with_permutation() {
        let (cfg, _, law) = linear();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ens = ParticleEnsemble::from_edge_law(&law, 1000, SimMode::Estimated, &mut rng).unwrap();
        let n = ens.len();
        let nx: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let ny: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let perm: Vec<usize> = (0..n).map(|i| (i * 389 + 7) % n).collect();
        let apply = |v: &[f64]| perm.iter().map(|&p| v[p]).collect::<Vec<_>>();
        let stepper = LocalStepper::new(&cfg, None);
        let stepped = stepper.step_with_noise(&ens, 1e-2, &nx, &ny).unwrap();
        let permuted = ParticleEnsemble {
            x: apply(&ens.x),
            y: apply(&ens.y),
            ..ens.clone()
        };
        let other = stepper
            .step_with_noise(&permuted, 1e-2, &apply(&nx), &apply(&ny))
            .unwrap();
        assert_eq!(other.x, apply(&stepped.x));
        assert_eq!(other.y, apply(&stepped.y));
    }

    #[test]
    fn swapping_sides_swaps_trajectory() {
        let (cfg, sol, law) = linear();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for mode in [SimMode::Decoupled, SimMode::Estimated] {
            let ens = ParticleEnsemble::from_edge_law(&law, 500, mode, &mut rng).unwrap();
            let nx: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
            let ny: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
            let stepper = LocalStepper::new(&cfg, Some(&sol));
            let (mut a, mut b) = (ens.clone(), ens.swapped());
            for _ in 0..20 {
                a = stepper.step_with_noise(&a, 1e-2, &nx, &ny).unwrap();
                b = stepper.step_with_noise(&b, 1e-2, &ny, &nx).unwrap();
            }
            assert_eq!(a.x, b.y);
            assert_eq!(a.y, b.x);
        }
    }

    #[test]
    fn no_interaction_relaxes_to_confinement_law() {
        let cfg = make_independent_model(3, 1.0).unwrap();
        let sol = FixedPointSolution::from_fn(&cfg, |_| 0.0).unwrap();
        let law = build_edge_law(&cfg, &sol).unwrap();
        let marginal = TabulatedCdf::new(&law.rho_x).unwrap();
        for mode in [SimMode::Decoupled, SimMode::Estimated] {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let ens = ParticleEnsemble::new(vec![1.5; 10_000], vec![-1.5; 10_000], mode).unwrap();
            let (fin, _) = evolve(&cfg, Some(&sol), ens, 1e-2, 10.0, 2, &marginal, &mut rng).unwrap();
            assert!(stats::ks_one_sample(&fin.x, |v| marginal.cdf(v)) < 0.02);
            assert!(stats::ks_one_sample(&fin.y, |v| marginal.cdf(v)) < 0.02);
        }
    }

    #[test]
    fn single_particle_time_average() {
        let (cfg, sol, _) = linear();
        let stepper = LocalStepper::new(&cfg, Some(&sol));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut ens = ParticleEnsemble::new(vec![0.0], vec![0.0], SimMode::Decoupled).unwrap();
        let dt = 1e-3;
        let steps = 1_000_000;
        let batch = 10_000;
        let mut batch_means = Vec::new();
        let mut acc = 0.0;
        for s in 1..=steps {
            ens = stepper.step(&ens, dt, &mut rng).unwrap();
            acc += ens.x[0];
            if s % batch == 0 {
                batch_means.push(acc / batch as f64);
                acc = 0.0;
            }
        }
        let mean = stats::mean(&batch_means);
        let se = (stats::variance(&batch_means) / batch_means.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "{mean} ± {se}");
    }

    fn dyson() -> (ModelConfig, FixedPointSolution, EdgeLaw) {
        let cfg = make_dyson_model(2, Potential::quadratic(1.0)).unwrap();
        let r = 3f64.sqrt();
        let sol = FixedPointSolution::from_fn(&cfg, |x| -(x * x + r).ln()).unwrap();
        let law = build_edge_law(&cfg, &sol).unwrap();
        (cfg, sol, law)
    }

    #[test]
    fn dyson_decoupled_stays_near_marginal() {
        let (cfg, sol, law) = dyson();
        let rep =
            run_stationarity_test(&cfg, &sol, &law, 10_000, 1e-3, 2.0, SimMode::Decoupled, None, 21).unwrap();
        assert!(rep.ks_marginal < 0.03, "{}", rep.ks_marginal);
    }

    #[test]
    fn dyson_relaxes_from_wrong_law() {
        // diagnostic: the KS distance should drop from its initial value and
        // settle near the sampling floor
        let (cfg, sol, law) = dyson();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let n = 10_000;
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let ens = ParticleEnsemble::new(x, y, SimMode::Decoupled).unwrap();
        let marginal = TabulatedCdf::new(&law.rho_x).unwrap();
        let (_, rows) = evolve(&cfg, Some(&sol), ens, 1e-3, 20.0, 4, &marginal, &mut rng).unwrap();
        assert_eq!(rows.len(), 5);
        let ks: Vec<f64> = rows.iter().map(|r| r.ks).collect();
        assert!(ks[0] > 0.05, "{ks:?}");
        assert!(ks[1..].iter().all(|&k| k < 0.03), "{ks:?}");
    }

    #[test]
    fn stationarity_requires_enough_particles() {
        let (cfg, sol, law) = linear();
        let r = run_stationarity_test(&cfg, &sol, &law, 10, 1e-3, 0.1, SimMode::Decoupled, None, 0);
        assert!(matches!(r, Err(ShmError::InsufficientSamples { .. })));
    }
}
