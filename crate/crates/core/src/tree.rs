//! Balls of the `m`-regular tree, exact sampling of the ball density `p_k`,
//! and the truncated tree SDE with wired leaves.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edge_law::EdgeLaw;
use crate::error::{Result, ShmError};
use crate::fixed_point::FixedPointSolution;
use crate::numerics::{convolve_weight, integrate, GridFunction, TabulatedCdf};
use crate::potentials::{ModelConfig, Potential};
use crate::stats;

/// Closed ball of radius `depth` around the root, vertices in BFS order.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeBall {
    m: usize,
    depth: usize,
    parent: Vec<Option<usize>>,
    level: Vec<usize>,
    children: Vec<Vec<usize>>,
    address: Vec<String>,
}

impl TreeBall {
    pub fn new(m: usize, depth: usize) -> Result<Self> {
        if m < 2 {
            return Err(ShmError::InvalidArgument(format!("m must be >= 2, got {m}")));
        }
        let mut ball = TreeBall {
            m,
            depth,
            parent: vec![None],
            level: vec![0],
            children: vec![vec![]],
            address: vec![String::new()],
        };
        let mut frontier = vec![0usize];
        for d in 1..=depth {
            let mut next = Vec::new();
            for &v in &frontier {
                let branching = if v == 0 { m } else { m - 1 };
                for c in 0..branching {
                    let id = ball.parent.len();
                    let addr = if v == 0 {
                        c.to_string()
                    } else {
                        format!("{}.{c}", ball.address[v])
                    };
                    ball.parent.push(Some(v));
                    ball.level.push(d);
                    ball.children.push(vec![]);
                    ball.address.push(addr);
                    ball.children[v].push(id);
                    next.push(id);
                }
            }
            frontier = next;
        }
        Ok(ball)
    }

    /// `1 + m((m-1)^k - 1)/(m-2)` for `m > 2`, `1 + 2k` for `m = 2`.
    pub fn expected_len(m: usize, depth: usize) -> usize {
        if m == 2 {
            1 + 2 * depth
        } else {
            1 + m * ((m - 1).pow(depth as u32) - 1) / (m - 2)
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn level(&self, v: usize) -> usize {
        self.level[v]
    }

    pub fn address(&self, v: usize) -> &str {
        &self.address[v]
    }

    pub fn find(&self, address: &str) -> Option<usize> {
        self.address.iter().position(|a| a == address)
    }

    /// Number of neighbours of `v` inside the ball.
    pub fn inner_degree(&self, v: usize) -> usize {
        self.children[v].len() + usize::from(self.parent[v].is_some())
    }

    /// The path `root, 0, 0.0, ...` down to the boundary.
    pub fn first_path(&self) -> Vec<usize> {
        let mut path = vec![0];
        let mut v = 0;
        while let Some(&c) = self.children[v].first() {
            path.push(c);
            v = c;
        }
        path
    }
}

/// One draw of the vertex values on a ball.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSample {
    pub ball: Arc<TreeBall>,
    pub values: Vec<f64>,
}

/// Inverse-CDF tables for the root marginal and the child kernels at every
/// grid parent value.
#[derive(Debug, Clone)]
pub struct TreeSampler {
    root: TabulatedCdf,
    rows: Vec<TabulatedCdf>,
}

impl TreeSampler {
    pub fn new(law: &EdgeLaw) -> Result<Self> {
        let grid = law.grid();
        let root = TabulatedCdf::new(&law.rho_x)?;
        let rows = (0..grid.len())
            .into_par_iter()
            .map(|i| TabulatedCdf::from_values(grid, law.rho_row(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(TreeSampler { root, rows })
    }

    pub fn root_cdf(&self) -> &TabulatedCdf {
        &self.root
    }

    /// Child value given the parent value. Off-grid-point parents use the
    /// kernel of a neighbouring grid point, chosen with the linear
    /// interpolation weights, so the draw follows the interpolated kernel.
    pub fn sample_child<R: Rng + ?Sized>(&self, parent: f64, rng: &mut R) -> f64 {
        let grid = self.root.grid();
        let (i, t) = grid.locate(parent.clamp(grid.lo(), grid.hi())).expect("clamped");
        let pick: f64 = rng.random();
        let row = if pick < t { i + 1 } else { i };
        self.rows[row].sample(open_unit(rng))
    }

    pub fn sample<R: Rng + ?Sized>(&self, ball: &Arc<TreeBall>, rng: &mut R) -> TreeSample {
        let mut values = vec![0.0; ball.len()];
        values[0] = self.root.sample(open_unit(rng));
        for v in 1..ball.len() {
            let p = ball.parent(v).expect("non-root");
            values[v] = self.sample_child(values[p], rng);
        }
        TreeSample {
            ball: ball.clone(),
            values,
        }
    }

    /// `count` independent draws; draw `i` uses stream `i` of the seed, so
    /// the output does not depend on the number of workers.
    pub fn sample_many(&self, ball: &Arc<TreeBall>, count: usize, seed: u64) -> Vec<TreeSample> {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(seed, i as u64);
                self.sample(ball, &mut rng)
            })
            .collect()
    }
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Independent RNG stream `index` of a master seed.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One exact draw from `p_k`.
pub fn sample_tree<R: Rng + ?Sized>(law: &EdgeLaw, k: usize, rng: &mut R) -> Result<TreeSample> {
    let ball = Arc::new(TreeBall::new(law.m(), k)?);
    Ok(TreeSampler::new(law)?.sample(&ball, rng))
}

/// Sup relative error of integrating the `m` boundary coordinates out of
/// `p_1`, compared with `p_0`, plus the defect of `\int p_0 = 1`.
pub fn consistency_check(law: &EdgeLaw, cfg: &ModelConfig) -> Result<f64> {
    let m = cfg.m as f64;
    let grid = cfg.grid;
    let g = GridFunction::from_fn(grid, |y| (-cfg.u().value(y) / m).exp())
        .zip_map(&law.l, |e, l| e * l.powf(m - 1.0));
    let conv = convolve_weight(&g, cfg.k().weight_kernel())?;
    let mut worst = 0.0_f64;
    for i in 0..grid.len() {
        let x = grid.point(i);
        let l = law.l.values[i];
        if !(l > 0.0) {
            continue;
        }
        // \int Q(x, y) l(y)^{m-1} dy, once per boundary child
        let child = (-law.c1 - cfg.u().value(x) / m).exp() * conv.values[i];
        let marginal = (child / l).powi(cfg.m as i32);
        worst = worst.max((marginal - 1.0).abs());
    }
    let p0 = law.boundary_marginal();
    worst = worst.max((integrate(&p0)? - 1.0).abs());
    Ok(worst)
}

/// Cut-off applied to `|x - y|` before evaluating a log-repulsive force.
pub const DEFAULT_CLIP: f64 = 1e-4;

#[inline]
pub(crate) fn interaction_force(k: &Potential, d: f64, clip: f64) -> f64 {
    if k.is_log_repulsive() && d.abs() < clip {
        let s = if d < 0.0 { -1.0 } else { 1.0 };
        k.derivative(s * clip)
    } else {
        k.derivative(d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeSdeState {
    pub ball: Arc<TreeBall>,
    pub values: Vec<f64>,
    pub time: f64,
    pub rng_seed: Option<u64>,
    /// Number of vertex updates that left the grid.
    pub escapes: usize,
}

impl TreeSdeState {
    pub fn escaped(&self) -> bool {
        self.escapes > 0
    }
}

/// Euler-Maruyama integrator for the SDE on a ball. Each vertex `v` feels
/// `U'`, the interaction with its neighbours inside the ball, and
/// `(m - deg(v)) F'`, so leaves carry `(m-1) F'` and `p_k` is stationary.
pub struct TreeSde<'a> {
    cfg: &'a ModelConfig,
    f_prime: GridFunction,
    clip: f64,
    state: TreeSdeState,
    drift: Vec<f64>,
}

impl<'a> TreeSde<'a> {
    pub fn new(cfg: &'a ModelConfig, sol: &FixedPointSolution, init: &TreeSample) -> Result<Self> {
        if init.values.iter().any(|v| !v.is_finite()) {
            return Err(ShmError::InvalidArgument("initial values must be finite".into()));
        }
        if init.ball.m() != cfg.m {
            return Err(ShmError::InvalidArgument("ball degree differs from model".into()));
        }
        Ok(TreeSde {
            cfg,
            f_prime: sol.derivative(),
            clip: DEFAULT_CLIP,
            drift: vec![0.0; init.values.len()],
            state: TreeSdeState {
                ball: init.ball.clone(),
                values: init.values.clone(),
                time: 0.0,
                rng_seed: None,
                escapes: 0,
            },
        })
    }

    pub fn with_clip(mut self, clip: f64) -> Self {
        self.clip = clip;
        self
    }

    pub fn state(&self) -> &TreeSdeState {
        &self.state
    }

    pub fn into_state(self) -> TreeSdeState {
        self.state
    }

    fn compute_drift(&mut self) {
        let ball = &self.state.ball;
        let x = &self.state.values;
        let m = self.cfg.m;
        let (u, k) = (self.cfg.u(), self.cfg.k());
        for v in 0..ball.len() {
            let mut d = u.derivative(x[v]);
            if let Some(p) = ball.parent(v) {
                d += interaction_force(k, x[v] - x[p], self.clip);
            }
            for &c in ball.children(v) {
                d += interaction_force(k, x[v] - x[c], self.clip);
            }
            let missing = m - ball.inner_degree(v);
            if missing > 0 {
                d += missing as f64 * self.f_prime.interpolate_extrapolate(x[v]);
            }
            self.drift[v] = d;
        }
    }

    /// One step with caller-supplied standard normals (one per vertex).
    pub fn step_with_noise(&mut self, dt: f64, noise: &[f64]) {
        self.compute_drift();
        let scale = (2.0 * dt).sqrt();
        let grid = self.cfg.grid;
        for (v, x) in self.state.values.iter_mut().enumerate() {
            *x += -self.drift[v] * dt + scale * noise[v];
            if !grid.contains(*x) {
                self.state.escapes += 1;
            }
        }
        self.state.time += dt;
    }

    pub fn step<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) {
        let noise: Vec<f64> = (0..self.state.values.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        self.step_with_noise(dt, &noise);
    }
}

fn step_count(dt: f64, t_end: f64) -> Result<usize> {
    if !(dt > 0.0) {
        return Err(ShmError::InvalidArgument("dt must be positive".into()));
    }
    if !(t_end >= 0.0) {
        return Err(ShmError::InvalidArgument("t_end must be non-negative".into()));
    }
    Ok((t_end / dt).round() as usize)
}

/// Integrate the wired tree SDE from `init` up to `t_end`.
pub fn simulate_tree_sde<R: Rng + ?Sized>(
    cfg: &ModelConfig,
    sol: &FixedPointSolution,
    dt: f64,
    t_end: f64,
    init: &TreeSample,
    rng: &mut R,
) -> Result<TreeSdeState> {
    let steps = step_count(dt, t_end)?;
    let mut sde = TreeSde::new(cfg, sol, init)?;
    for _ in 0..steps {
        sde.step(dt, rng);
    }
    Ok(sde.into_state())
}

/// [`simulate_tree_sde`] driven by a ChaCha stream seeded with `seed`.
pub fn simulate_tree_sde_seeded(
    cfg: &ModelConfig,
    sol: &FixedPointSolution,
    dt: f64,
    t_end: f64,
    init: &TreeSample,
    seed: u64,
) -> Result<TreeSdeState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = simulate_tree_sde(cfg, sol, dt, t_end, init, &mut rng)?;
    state.rng_seed = Some(seed);
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeStationarity {
    pub replicas: usize,
    /// Snapshot times at which root values were recorded.
    pub times: Vec<f64>,
    /// KS distance of the root values at `t_end` to the marginal.
    pub ks_final: f64,
    /// KS distance of the root values pooled over all snapshot times.
    pub ks_pooled: f64,
    pub escapes: usize,
}

/// Run `replicas` independent wired-tree trajectories started from exact
/// draws of `p_k`, recording the root value at `snapshots` evenly spaced
/// times in `(0, t_end]`.
#[allow(clippy::too_many_arguments)]
pub fn tree_stationarity(
    cfg: &ModelConfig,
    sol: &FixedPointSolution,
    sampler: &TreeSampler,
    depth: usize,
    dt: f64,
    t_end: f64,
    replicas: usize,
    snapshots: usize,
    seed: u64,
) -> Result<TreeStationarity> {
    let steps = step_count(dt, t_end)?;
    let snapshots = snapshots.max(1);
    let ball = Arc::new(TreeBall::new(cfg.m, depth)?);
    let marks: Vec<usize> = (1..=snapshots).map(|j| j * steps / snapshots).collect();
    let runs = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<(Vec<f64>, usize)> {
            let mut rng = stream_rng(seed, r as u64);
            let init = sampler.sample(&ball, &mut rng);
            let mut sde = TreeSde::new(cfg, sol, &init)?;
            let mut roots = Vec::with_capacity(snapshots);
            let mut next = 0;
            for s in 1..=steps {
                sde.step(dt, &mut rng);
                while next < marks.len() && marks[next] == s {
                    roots.push(sde.state().values[0]);
                    next += 1;
                }
            }
            while roots.len() < snapshots {
                roots.push(sde.state().values[0]);
            }
            Ok((roots, sde.state().escapes))
        })
        .collect::<Result<Vec<_>>>()?;
    let cdf = sampler.root_cdf();
    let finals: Vec<f64> = runs.iter().map(|(r, _)| *r.last().unwrap()).collect();
    let pooled: Vec<f64> = runs.iter().flat_map(|(r, _)| r.iter().copied()).collect();
    Ok(TreeStationarity {
        replicas,
        times: marks.iter().map(|&s| s as f64 * dt).collect(),
        ks_final: stats::ks_one_sample(&finals, |x| cdf.cdf(x)),
        ks_pooled: stats::ks_one_sample(&pooled, |x| cdf.cdf(x)),
        escapes: runs.iter().map(|(_, e)| e).sum(),
    })
}

/// Values of vertex `v` across samples.
pub fn column(samples: &[TreeSample], v: usize) -> Vec<f64> {
    samples.iter().map(|s| s.values[v]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceCovariance {
    pub distance: usize,
    pub covariance: f64,
    pub correlation: f64,
    pub standard_error: f64,
}

/// Covariance and correlation between the root and the vertex at distance
/// `d` along the first path, for `d = 0..=depth`.
pub fn distance_covariances(samples: &[TreeSample]) -> Vec<DistanceCovariance> {
    let Some(first) = samples.first() else {
        return vec![];
    };
    let root = column(samples, 0);
    first
        .ball
        .first_path()
        .into_iter()
        .enumerate()
        .map(|(d, v)| {
            let col = column(samples, v);
            let r = stats::correlation(&root, &col);
            DistanceCovariance {
                distance: d,
                covariance: stats::covariance(&root, &col),
                correlation: r,
                standard_error: stats::correlation_se(r, samples.len()),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkovMethod {
    /// Gaussian partial correlation of (root, grandchild) given the child.
    PartialCorrelation,
    /// Correlation of residuals after a linear fit on the child within
    /// quantile bins of the child value.
    Binned { bins: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovTest {
    pub partial_corr: f64,
    pub pass: bool,
}

pub const MARKOV_MIN_SAMPLES: usize = 100_000;
pub const MARKOV_THRESHOLD: f64 = 0.01;

/// Conditional-independence proxy for (root, grandchild `0.0`) given child `0`.
pub fn markov_test(samples: &[TreeSample], method: MarkovMethod) -> Result<MarkovTest> {
    if samples.len() < MARKOV_MIN_SAMPLES {
        return Err(ShmError::InsufficientSamples {
            got: samples.len(),
            need: MARKOV_MIN_SAMPLES,
        });
    }
    if samples[0].ball.depth() < 2 {
        return Err(ShmError::InvalidArgument("markov_test needs depth >= 2".into()));
    }
    let path = samples[0].ball.first_path();
    let (a, c, b) = (
        column(samples, path[0]),
        column(samples, path[1]),
        column(samples, path[2]),
    );
    let partial_corr = match method {
        MarkovMethod::PartialCorrelation => stats::partial_correlation(&a, &b, &c),
        MarkovMethod::Binned { bins } => binned_residual_correlation(&a, &b, &c, bins.max(1)),
    };
    Ok(MarkovTest {
        partial_corr,
        pass: partial_corr.abs() < MARKOV_THRESHOLD,
    })
}

fn binned_residual_correlation(a: &[f64], b: &[f64], c: &[f64], bins: usize) -> f64 {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&i, &j| c[i].total_cmp(&c[j]));
    let (mut ra, mut rb) = (Vec::with_capacity(c.len()), Vec::with_capacity(c.len()));
    for chunk in order.chunks(c.len().div_ceil(bins)) {
        if chunk.len() < 3 {
            continue;
        }
        let pick = |v: &[f64]| chunk.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let (ca, cb, cc) = (pick(a), pick(b), pick(c));
        let residuals = |y: &[f64]| {
            let var = stats::variance(&cc);
            let slope = if var > 0.0 { stats::covariance(y, &cc) / var } else { 0.0 };
            let (my, mc) = (stats::mean(y), stats::mean(&cc));
            y.iter()
                .zip(&cc)
                .map(|(yi, ci)| yi - my - slope * (ci - mc))
                .collect::<Vec<_>>()
        };
        ra.extend(residuals(&ca));
        rb.extend(residuals(&cb));
    }
    stats::correlation(&ra, &rb)
}

/// Two-dimensional KS distance between the joint laws of
/// (root, child `0`) and (child `0`, grandchild `0.0`).
pub fn homogeneity_ks(samples: &[TreeSample]) -> Result<f64> {
    if samples.is_empty() || samples[0].ball.depth() < 2 {
        return Err(ShmError::InvalidArgument("homogeneity needs depth >= 2".into()));
    }
    let path = samples[0].ball.first_path();
    let upper: Vec<(f64, f64)> = samples.iter().map(|s| (s.values[path[0]], s.values[path[1]])).collect();
    let lower: Vec<(f64, f64)> = samples.iter().map(|s| (s.values[path[1]], s.values[path[2]])).collect();
    Ok(stats::ks_two_sample_2d(&upper, &lower, stats::KS2D_LATTICE))
}
