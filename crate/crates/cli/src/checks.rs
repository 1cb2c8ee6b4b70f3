use std::sync::Arc;

use shm_core::analytics::{
    dyson_report, kesten_mckay_integral, linear_report, resolvent, stieltjes_check, Regime,
    KM_NODES,
};
use shm_core::edge_law::{boundary_law_residual, build_edge_law, EdgeLaw};
use shm_core::fixed_point::{
    apply_t, band_check, solve_picard, solve_power_m2, FixedPointSolution, PicardOptions,
};
use shm_core::local_sim::{run_stationarity_test, SimMode};
use shm_core::numerics::GridFunction;
use shm_core::potentials::{make_dyson_model, make_linear_model, ModelConfig, Potential};
use shm_core::stats;
use shm_core::tree::{
    consistency_check, distance_covariances, homogeneity_ks, markov_test, tree_stationarity,
    MarkovMethod, TreeBall, TreeSample, TreeSampler,
};
use shm_core::Result;

pub struct CheckOutcome {
    pub pass: bool,
    pub detail: String,
    /// Extra rows printed under the table entry.
    pub rows: Vec<String>,
}

impl CheckOutcome {
    fn new(pass: bool, detail: String) -> Self {
        CheckOutcome {
            pass,
            detail,
            rows: vec![],
        }
    }
}

pub struct Check {
    pub name: &'static str,
    pub run: fn() -> Result<CheckOutcome>,
}

pub const CHECKS: &[Check] = &[
    Check { name: "linear-fixed-point", run: linear_fixed_point },
    Check { name: "resolvent-identity", run: resolvent_identity },
    Check { name: "regime-table", run: regime_table },
    Check { name: "kesten-mckay", run: kesten_mckay },
    Check { name: "stieltjes", run: stieltjes },
    Check { name: "dyson-m2", run: dyson_m2 },
    Check { name: "dyson-m3", run: dyson_m3 },
    Check { name: "boundary-law", run: boundary_law },
    Check { name: "consistency", run: consistency },
    Check { name: "tree-correlations", run: tree_correlations },
    Check { name: "markov", run: markov },
    Check { name: "homogeneity", run: homogeneity },
    Check { name: "local-stationarity", run: local_stationarity },
    Check { name: "tree-sde", run: tree_sde },
    Check { name: "m2-equivalence", run: m2_equivalence },
    Check { name: "gauge-invariance", run: gauge_invariance },
    Check { name: "band-check", run: band },
];

pub fn find(name: &str) -> Option<&'static Check> {
    CHECKS.iter().find(|c| c.name == name)
}

pub fn names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.name).collect()
}

fn rho_plus(m: usize, z: f64) -> f64 {
    linear_report(m, z).rho_plus.unwrap_or(f64::NAN)
}

fn picard(cfg: &ModelConfig, tol: f64) -> Result<FixedPointSolution> {
    let opts = PicardOptions {
        tol,
        ..PicardOptions::default()
    };
    solve_picard(cfg, opts, &GridFunction::zeros(cfg.grid))
}

fn linear_law() -> Result<(ModelConfig, FixedPointSolution, EdgeLaw)> {
    let cfg = make_linear_model(3, 4.0)?;
    let sol = picard(&cfg, 1e-10)?;
    let law = build_edge_law(&cfg, &sol)?;
    Ok((cfg, sol, law))
}

fn linear_samples(depth: usize, n: usize) -> Result<Vec<TreeSample>> {
    let (_, _, law) = linear_law()?;
    let sampler = TreeSampler::new(&law)?;
    let ball = Arc::new(TreeBall::new(3, depth)?);
    Ok(sampler.sample_many(&ball, n, 2024))
}

fn linear_fixed_point() -> Result<CheckOutcome> {
    let cfg = make_linear_model(3, 4.0)?;
    let sol = picard(&cfg, 1e-8)?;
    let rho = rho_plus(3, 4.0);
    let grid = cfg.grid;
    let err = (0..grid.len())
        .filter(|&i| grid.point(i).abs() <= 6.0)
        .map(|i| (sol.f.values[i] - (1.0 - rho) * grid.point(i).powi(2) / 2.0).abs())
        .fold(0.0, f64::max);
    Ok(CheckOutcome::new(
        sol.converged() && err < 1e-3,
        format!("sup|F - (1-rho+)x^2/2| on [-6,6] = {err:.2e}, {} iterations", sol.iterations),
    ))
}

fn resolvent_identity() -> Result<CheckOutcome> {
    let mut pass = true;
    let mut rows = vec![format!("{:>4} {:>8} {:>14} {:>14} {:>10}", "m", "z", "lhs", "rhs", "err")];
    for m in [3usize, 4] {
        for z in [m as f64 + 0.5, m as f64 + 1.0, m as f64 + 2.0, m as f64 + 5.0] {
            let st = stieltjes_check(m, z)?;
            let s2 = linear_report(m, z).sigma2_plus.unwrap_or(f64::NAN);
            pass &= st.err < 1e-4 && (resolvent(m, z)? - s2).abs() < 1e-12;
            rows.push(format!("{m:>4} {z:>8.3} {:>14.10} {:>14.10} {:>10.2e}", st.lhs, st.rhs, st.err));
        }
    }
    Ok(CheckOutcome {
        pass,
        detail: "Kesten-McKay Stieltjes transform vs closed-form resolvent (= sigma+^2)".into(),
        rows,
    })
}

fn regime_table() -> Result<CheckOutcome> {
    let probes = [
        (4.0, Regime::I, Some(true)),
        (3.0, Regime::Ii, Some(true)),
        (2.9, Regime::Iii, Some(true)),
        (2.0 * 2f64.sqrt(), Regime::Iv, Some(false)),
        (2.0, Regime::V, None),
    ];
    let mut pass = true;
    let mut labels = vec![];
    for (z, regime, ext) in probes {
        let r = linear_report(3, z);
        pass &= r.regime == regime && r.extendable_plus == ext;
        labels.push(format!("{z:.3}:{}", r.regime.label()));
    }
    Ok(CheckOutcome::new(pass, labels.join(" ")))
}

fn kesten_mckay() -> Result<CheckOutcome> {
    let mass = kesten_mckay_integral(3, |_| 1.0, KM_NODES)?;
    let second = kesten_mckay_integral(3, |x| x * x, KM_NODES)?;
    Ok(CheckOutcome::new(
        (mass - 1.0).abs() < 1e-6 && (second - 3.0).abs() < 1e-4,
        format!("mass {mass:.10}, second moment {second:.8}"),
    ))
}

fn stieltjes() -> Result<CheckOutcome> {
    let cases = [(3, 4.0, 1e-4), (3, 10.0, 1e-6), (2, 3.0, 1e-3)];
    let mut pass = true;
    let mut parts = vec![];
    for (m, z, tol) in cases {
        let st = stieltjes_check(m, z)?;
        pass &= st.err < tol;
        parts.push(format!("({m},{z}) err {:.1e}", st.err));
    }
    Ok(CheckOutcome::new(pass, parts.join(", ")))
}

fn dyson_m2() -> Result<CheckOutcome> {
    let rep = dyson_report(&make_dyson_model(2, Potential::quadratic(1.0))?)?;
    let err = (rep.r - 3f64.sqrt()).abs();
    Ok(CheckOutcome::new(
        err < 1e-8 && rep.residual < 1e-6,
        format!("r = {:.10}, residual {:.1e}", rep.r, rep.residual),
    ))
}

fn dyson_m3() -> Result<CheckOutcome> {
    let rep = dyson_report(&make_dyson_model(3, Potential::quadratic(1.0))?)?;
    Ok(CheckOutcome::new(
        (rep.r - 2.5297).abs() < 1e-3 && rep.sign_changes == 1 && rep.residual < 1e-6,
        format!("r = {:.8}, sign changes {}, residual {:.1e}", rep.r, rep.sign_changes, rep.residual),
    ))
}

fn exact_models() -> Result<Vec<(&'static str, ModelConfig, EdgeLaw)>> {
    let lin = make_linear_model(3, 4.0)?;
    let rho = rho_plus(3, 4.0);
    let lin_law = build_edge_law(&lin, &FixedPointSolution::from_fn(&lin, |x| (1.0 - rho) * x * x / 2.0)?)?;
    let dys = make_dyson_model(2, Potential::quadratic(1.0))?;
    let r = 3f64.sqrt();
    let dys_law = build_edge_law(&dys, &FixedPointSolution::from_fn(&dys, |x| -(x * x + r).ln())?)?;
    Ok(vec![("linear", lin, lin_law), ("dyson", dys, dys_law)])
}

fn boundary_law() -> Result<CheckOutcome> {
    let mut pass = true;
    let mut parts = vec![];
    for (name, cfg, law) in exact_models()? {
        let r = boundary_law_residual(&law, &cfg)?;
        pass &= r < 1e-5;
        parts.push(format!("{name} {r:.1e}"));
    }
    Ok(CheckOutcome::new(pass, parts.join(", ")))
}

fn consistency() -> Result<CheckOutcome> {
    let mut pass = true;
    let mut parts = vec![];
    for (name, cfg, law) in exact_models()? {
        let r = consistency_check(&law, &cfg)?;
        pass &= r < 1e-5;
        parts.push(format!("{name} {r:.1e}"));
    }
    Ok(CheckOutcome::new(pass, parts.join(", ")))
}

fn tree_correlations() -> Result<CheckOutcome> {
    let n = 200_000;
    let samples = linear_samples(3, n)?;
    let rho = rho_plus(3, 4.0);
    let mut pass = true;
    let mut parts = vec![];
    for c in distance_covariances(&samples).iter().skip(1) {
        let target = rho.powi(c.distance as i32);
        let se = stats::correlation_se(target, n);
        pass &= (c.correlation - target).abs() < 3.0 * se;
        parts.push(format!("d={} {:.4}/{target:.4}", c.distance, c.correlation));
    }
    Ok(CheckOutcome::new(pass, parts.join(", ")))
}

fn markov() -> Result<CheckOutcome> {
    let samples = linear_samples(2, 200_000)?;
    let pc = markov_test(&samples, MarkovMethod::PartialCorrelation)?;
    let binned = markov_test(&samples, MarkovMethod::Binned { bins: 40 })?;
    Ok(CheckOutcome::new(
        pc.pass && binned.pass,
        format!("partial corr {:.4}, binned {:.4}", pc.partial_corr, binned.partial_corr),
    ))
}

fn homogeneity() -> Result<CheckOutcome> {
    let ks = homogeneity_ks(&linear_samples(2, 200_000)?)?;
    Ok(CheckOutcome::new(ks < 0.02, format!("2-D KS {ks:.4}")))
}

fn local_stationarity() -> Result<CheckOutcome> {
    let (cfg, sol, law) = linear_law()?;
    let rep = run_stationarity_test(&cfg, &sol, &law, 10_000, 1e-3, 2.0, SimMode::Decoupled, None, 3)?;
    Ok(CheckOutcome::new(
        rep.ks_marginal < 0.02 && rep.symmetry_ks < 0.02,
        format!("T = 2: KS {:.4}, symmetry KS {:.4}", rep.ks_marginal, rep.symmetry_ks),
    ))
}

fn tree_sde() -> Result<CheckOutcome> {
    let (cfg, sol, law) = linear_law()?;
    let sampler = TreeSampler::new(&law)?;
    let rep = tree_stationarity(&cfg, &sol, &sampler, 2, 1e-3, 5.0, 1000, 10, 5)?;
    Ok(CheckOutcome::new(
        rep.ks_pooled < 0.02,
        format!("pooled root KS {:.4} (final snapshot {:.4})", rep.ks_pooled, rep.ks_final),
    ))
}

fn m2_equivalence() -> Result<CheckOutcome> {
    let cfg = make_linear_model(2, 3.0)?;
    let pic = picard(&cfg, 1e-12)?;
    let pow = solve_power_m2(&cfg, 1e-13, 10_000)?;
    let gap = pic.f.sup_distance(&pow.f);
    Ok(CheckOutcome::new(gap < 1e-6, format!("sup gap {gap:.1e}")))
}

fn gauge_invariance() -> Result<CheckOutcome> {
    let cfg = make_linear_model(3, 4.0)?;
    let f = GridFunction::from_fn(cfg.grid, |x| 0.3 * x * x);
    let err = apply_t(&cfg, &f)?.sup_distance(&apply_t(&cfg, &f.map(|v| v - 1.25))?);
    Ok(CheckOutcome::new(err < 1e-12, format!("T(F + c) - T(F) = {err:.1e}")))
}

fn band() -> Result<CheckOutcome> {
    let (cfg, sol, _) = linear_law()?;
    let b = band_check(&cfg, &sol)?;
    Ok(CheckOutcome::new(
        b.in_band,
        format!("F'' in [{:.4}, {:.4}], band [{:.4}, {:.4}]", b.min_f2, b.max_f2, b.lower, b.upper),
    ))
}

/// Checks that apply to any configured model.
pub fn model_checks(cfg: &ModelConfig) -> Result<Vec<(String, CheckOutcome)>> {
    let sol = solve_picard(cfg, PicardOptions::default(), &GridFunction::zeros(cfg.grid))?;
    let law = build_edge_law(cfg, &sol)?;
    let n = sol.f.len();
    let even = (0..n)
        .map(|i| (sol.f.values[i] - sol.f.values[n - 1 - i]).abs())
        .fold(0.0, f64::max);
    let residual = boundary_law_residual(&law, cfg)?;
    let cons = consistency_check(&law, cfg)?;
    Ok(vec![
        (
            "model:fixed-point".into(),
            CheckOutcome::new(
                sol.converged() && sol.residual < 1e-6,
                format!("{} iterations, residual {:.1e}", sol.iterations, sol.residual),
            ),
        ),
        ("model:evenness".into(), CheckOutcome::new(even < 1e-8, format!("{even:.1e}"))),
        ("model:boundary-law".into(), CheckOutcome::new(residual < 1e-5, format!("{residual:.1e}"))),
        ("model:consistency".into(), CheckOutcome::new(cons < 1e-5, format!("{cons:.1e}"))),
    ])
}
