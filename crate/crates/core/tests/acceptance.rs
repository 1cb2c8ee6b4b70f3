//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned
//! below. Runs as a plain binary so every line is printed.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use shm_core::analytics::{
    dyson_report, dyson_root, kesten_mckay_integral, linear_report, resolvent, stieltjes_check,
    Regime, KM_NODES,
};
use shm_core::edge_law::{boundary_law_residual, build_edge_law};
use shm_core::fixed_point::{apply_t, solve_picard, solve_power_m2, FixedPointSolution, PicardOptions};
use shm_core::local_sim::{run_stationarity_test, SimMode};
use shm_core::numerics::{horner, GridFunction};
use shm_core::potentials::{make_dyson_model, make_linear_model, ModelConfig, Potential};
use shm_core::stats;
use shm_core::tree::{
    consistency_check, distance_covariances, homogeneity_ks, markov_test, tree_stationarity,
    MarkovMethod, TreeBall, TreeSampler,
};

const RHO_PLUS_34: f64 = 0.292_893_218_813_452_5;

type Criterion = (&'static str, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rho_plus(m: usize, z: f64) -> f64 {
    let a = (m - 1) as f64;
    (z - (z * z - 4.0 * a).sqrt()) / (2.0 * a)
}

fn sup_on(f: &GridFunction, lo: f64, hi: f64, g: impl Fn(f64) -> f64) -> f64 {
    let grid = f.grid;
    (0..grid.len())
        .map(|i| (grid.point(i), f.values[i]))
        .filter(|(x, _)| *x >= lo - 1e-12 && *x <= hi + 1e-12)
        .map(|(x, v)| (v - g(x)).abs())
        .fold(0.0, f64::max)
}

fn picard(cfg: &ModelConfig, tol: f64) -> FixedPointSolution {
    let opts = PicardOptions {
        tol,
        ..PicardOptions::default()
    };
    solve_picard(cfg, opts, &GridFunction::zeros(cfg.grid)).expect("picard")
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("pool")
        .install(f)
}

/// Least-squares curvature `a` of `F ~ a x^2 / 2` over `|x| <= 3`.
fn fitted_curvature(f: &GridFunction) -> f64 {
    let grid = f.grid;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..grid.len() {
        let x = grid.point(i);
        if x.abs() <= 3.0 {
            let b = x * x / 2.0;
            num += b * f.values[i];
            den += b * b;
        }
    }
    num / den
}

fn c1_literal_linear_fixed_point() -> Outcome {
    let cfg = make_linear_model(3, 4.0).unwrap();
    let rho = rho_plus(3, 4.0);
    let start = Instant::now();
    let sol = single_threaded(|| picard(&cfg, 1e-8));
    let elapsed = start.elapsed();
    let err = sup_on(&sol.f, -6.0, 6.0, |x| rho * x * x / 2.0);
    outcome(
        err < 1e-3 && elapsed < Duration::from_secs(10),
        format!("sup|F - rho+ x^2/2| on [-6,6] = {err:.3e} (tol 1e-3), {:.2}s single-threaded", elapsed.as_secs_f64()),
    )
}

fn c1_corrected_linear_fixed_point() -> Outcome {
    let cfg = make_linear_model(3, 4.0).unwrap();
    let rho = rho_plus(3, 4.0);
    let start = Instant::now();
    let sol = single_threaded(|| picard(&cfg, 1e-8));
    let elapsed = start.elapsed();
    let err = sup_on(&sol.f, -6.0, 6.0, |x| (1.0 - rho) * x * x / 2.0);
    outcome(
        sol.converged() && err < 1e-3 && elapsed < Duration::from_secs(10),
        format!(
            "sup|F - (1-rho+) x^2/2| on [-6,6] = {err:.3e} (tol 1e-3), {} iterations, {:.2}s single-threaded",
            sol.iterations,
            elapsed.as_secs_f64()
        ),
    )
}

fn c2_resolvent_identity() -> Outcome {
    let mut pass = true;
    let mut parts = vec![];
    for (m, z) in [(3, 4.0), (3, 5.0), (4, 5.0), (4, 6.0)] {
        let res = resolvent(m, z).unwrap();
        let s2 = linear_report(m, z).sigma2_plus.unwrap();
        let cfg = make_linear_model(m, z).unwrap();
        let sol = picard(&cfg, 1e-10);
        let var = build_edge_law(&cfg, &sol).unwrap().summary().variance;
        let (alg, e2e) = ((res - s2).abs(), (res - var).abs());
        pass &= alg < 1e-12 && e2e < 1e-3;
        parts.push(format!("({m},{z}): alg {alg:.1e} e2e {e2e:.1e}"));
    }
    outcome(pass, format!("{} (tol 1e-12 / 1e-3)", parts.join("; ")))
}

fn c3_kesten_mckay() -> Outcome {
    let mass = kesten_mckay_integral(3, |_| 1.0, KM_NODES).unwrap();
    let st = stieltjes_check(3, 4.0).unwrap();
    let second = kesten_mckay_integral(3, |x| x * x, KM_NODES).unwrap();
    outcome(
        (mass - 1.0).abs() < 1e-6 && st.err < 1e-4 && (second - 3.0).abs() < 1e-4,
        format!(
            "mass-1 = {:.1e} (1e-6), stieltjes err = {:.1e} (1e-4), second moment-3 = {:.1e} (1e-4)",
            mass - 1.0,
            st.err,
            second - 3.0
        ),
    )
}

fn c4_dyson_m2() -> Outcome {
    let cfg = make_dyson_model(2, Potential::quadratic(1.0)).unwrap();
    let rep = dyson_report(&cfg).unwrap();
    let err = (rep.r - 3f64.sqrt()).abs();
    outcome(
        err < 1e-8 && rep.residual < 1e-6,
        format!("|r - sqrt 3| = {err:.1e} (1e-8), residual = {:.1e} (1e-6)", rep.residual),
    )
}

/// Scan `[0, 10]` in steps of `1e-6` for the first sign change, then place
/// the root by linear interpolation inside that cell.
fn sign_scan_root(coeffs: &[f64]) -> Option<f64> {
    let h = 1e-6;
    let mut prev = horner(coeffs, 0.0);
    for i in 1..=10_000_000u64 {
        let x = i as f64 * h;
        let p = horner(coeffs, x);
        if prev == 0.0 {
            return Some(x - h);
        }
        if (p < 0.0) != (prev < 0.0) {
            return Some(x - h + h * prev / (prev - p));
        }
        prev = p;
    }
    None
}

fn c5_dyson_m3() -> Outcome {
    let cfg = make_dyson_model(3, Potential::quadratic(1.0)).unwrap();
    let rep = dyson_report(&cfg).unwrap();
    let s = (2.0 * std::f64::consts::PI).sqrt();
    let reduced: Vec<f64> = rep.poly_coeffs.iter().map(|c| c / s).collect();
    let coeff_err = reduced
        .iter()
        .zip([1.0, 1.0, -3.0, -15.0])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let pattern: Vec<bool> = reduced.iter().map(|c| *c > 0.0).collect();
    let pattern_ok = pattern == [true, true, false, false] && rep.sign_changes == 1;
    let scan = sign_scan_root(&rep.poly_coeffs).unwrap_or(f64::NAN);
    let exact_scan = sign_scan_root(&[1.0, 1.0, -3.0, -15.0]).unwrap_or(f64::NAN);
    let exact_bisect = dyson_root(&[1.0, 1.0, -3.0, -15.0]).unwrap();
    let agree = (rep.r - scan).abs();
    let agree_exact = (exact_bisect - exact_scan).abs();
    outcome(
        coeff_err < 1e-8 && pattern_ok && agree < 1e-8 && agree_exact < 1e-8,
        format!(
            "coeffs/sqrt(2pi) within {coeff_err:.1e} of (1,1,-3,-15), pattern (+,+,-,-) {pattern_ok}, r = {:.10}, |bisect - scan| = {agree:.1e} (exact poly {agree_exact:.1e}; tol 1e-8)",
            rep.r
        ),
    )
}

fn c6_boundary_law() -> Outcome {
    let lin = make_linear_model(3, 4.0).unwrap();
    let rho = rho_plus(3, 4.0);
    let lin_sol = FixedPointSolution::from_fn(&lin, |x| (1.0 - rho) * x * x / 2.0).unwrap();
    let lin_law = build_edge_law(&lin, &lin_sol).unwrap();
    let dys = make_dyson_model(2, Potential::quadratic(1.0)).unwrap();
    let r = 3f64.sqrt();
    let dys_sol = FixedPointSolution::from_fn(&dys, |x| -(x * x + r).ln()).unwrap();
    let dys_law = build_edge_law(&dys, &dys_sol).unwrap();
    let values = [
        boundary_law_residual(&lin_law, &lin).unwrap(),
        boundary_law_residual(&dys_law, &dys).unwrap(),
        consistency_check(&lin_law, &lin).unwrap(),
        consistency_check(&dys_law, &dys).unwrap(),
    ];
    outcome(
        values.iter().all(|v| *v < 1e-5),
        format!(
            "residual linear {:.1e} dyson {:.1e}; consistency linear {:.1e} dyson {:.1e} (tol 1e-5)",
            values[0], values[1], values[2], values[3]
        ),
    )
}

fn linear_law() -> (ModelConfig, FixedPointSolution, shm_core::edge_law::EdgeLaw) {
    let cfg = make_linear_model(3, 4.0).unwrap();
    let sol = picard(&cfg, 1e-10);
    let law = build_edge_law(&cfg, &sol).unwrap();
    (cfg, sol, law)
}

fn c7_tree_sampler() -> Outcome {
    let (_, _, law) = linear_law();
    let start = Instant::now();
    let sampler = TreeSampler::new(&law).unwrap();
    let ball = Arc::new(TreeBall::new(3, 3).unwrap());
    let n = 200_000;
    let samples = sampler.sample_many(&ball, n, 20_260_101);
    let cov = distance_covariances(&samples);
    let mut corr_ok = true;
    let mut parts = vec![];
    for c in &cov[1..=3] {
        let target = RHO_PLUS_34.powi(c.distance as i32);
        let se = stats::correlation_se(target, n);
        let z = (c.correlation - target) / se;
        corr_ok &= z.abs() < 3.0;
        parts.push(format!("d={} {:.4} vs {target:.4} ({z:+.2} SE)", c.distance, c.correlation));
    }
    let mk = markov_test(&samples, MarkovMethod::PartialCorrelation).unwrap();
    let hom = homogeneity_ks(&samples).unwrap();
    let elapsed = start.elapsed();
    outcome(
        corr_ok && mk.partial_corr.abs() < 0.01 && hom < 0.02 && elapsed < Duration::from_secs(60),
        format!(
            "{}; markov |pc| = {:.4} (0.01); homogeneity KS = {hom:.4} (0.02); {:.1}s",
            parts.join(", "),
            mk.partial_corr.abs(),
            elapsed.as_secs_f64()
        ),
    )
}

fn c8_local_stationarity() -> Outcome {
    let (cfg, sol, law) = linear_law();
    let start = Instant::now();
    let dec = run_stationarity_test(&cfg, &sol, &law, 10_000, 1e-3, 10.0, SimMode::Decoupled, None, 11).unwrap();
    let est = run_stationarity_test(&cfg, &sol, &law, 10_000, 1e-3, 10.0, SimMode::Estimated, None, 12).unwrap();
    let elapsed = start.elapsed();
    outcome(
        dec.ks_marginal < 0.02
            && dec.symmetry_ks < 0.02
            && est.ks_marginal < 0.03
            && elapsed < Duration::from_secs(300),
        format!(
            "decoupled KS {:.4} sym {:.4} (0.02); estimated KS {:.4} (0.03, h = {:.4}); {:.1}s",
            dec.ks_marginal,
            dec.symmetry_ks,
            est.ks_marginal,
            est.bandwidth.unwrap_or(f64::NAN),
            elapsed.as_secs_f64()
        ),
    )
}

fn c9_tree_sde() -> Outcome {
    let (cfg, sol, law) = linear_law();
    let sampler = TreeSampler::new(&law).unwrap();
    let rep = tree_stationarity(&cfg, &sol, &sampler, 2, 1e-3, 5.0, 1000, 10, 99).unwrap();
    outcome(
        rep.ks_pooled < 0.02,
        format!(
            "root KS pooled over t = 0.5..5 = {:.4} (0.02); single snapshot at T = {:.4}; escapes {}",
            rep.ks_pooled, rep.ks_final, rep.escapes
        ),
    )
}

fn c10_m2_equivalence() -> Outcome {
    let cfg = make_linear_model(2, 3.0).unwrap();
    let pic = picard(&cfg, 1e-12);
    let pow = solve_power_m2(&cfg, 1e-13, 10_000).unwrap();
    let gap = pic.f.sup_distance(&pow.f);
    let quad = |f: &GridFunction| {
        let rho = 1.0 - fitted_curvature(f);
        (rho * rho - 3.0 * rho + 1.0).abs()
    };
    let (qp, qw) = (quad(&pic.f), quad(&pow.f));
    outcome(
        gap < 1e-6 && qp < 1e-4 && qw < 1e-4,
        format!("sup|F_picard - F_power| = {gap:.1e} (1e-6); quadratic residual picard {qp:.1e} power {qw:.1e} (1e-4)"),
    )
}

fn c11_regime_table() -> Outcome {
    let edge = 2.0 * 2f64.sqrt();
    let expected = [
        (4.0, Regime::I, Some(true), None),
        (3.0, Regime::Ii, Some(true), None),
        (2.9, Regime::Iii, Some(true), Some(false)),
        (edge, Regime::Iv, Some(false), None),
        (2.0, Regime::V, None, None),
    ];
    let mut pass = true;
    let mut parts = vec![];
    for (z, regime, ext_p, ext_m) in expected {
        let r = linear_report(3, z);
        let ok = r.regime == regime && r.extendable_plus == ext_p && r.extendable_minus == ext_m;
        pass &= ok;
        parts.push(format!("z={z:.4}->{} {}", r.regime.label(), if ok { "ok" } else { "MISMATCH" }));
    }
    outcome(pass, parts.join(", "))
}

fn c12_invariance() -> Outcome {
    let cfg = make_linear_model(3, 4.0).unwrap();
    let f = GridFunction::from_fn(cfg.grid, |x| 0.3 * x * x + 0.01 * x.powi(4) / (1.0 + x * x));
    let shifted = f.map(|v| v + 0.75);
    let shift_err = apply_t(&cfg, &f)
        .unwrap()
        .sup_distance(&apply_t(&cfg, &shifted).unwrap());

    let base = make_dyson_model(3, Potential::quadratic(1.0)).unwrap();
    let scaled = make_dyson_model(3, Potential::custom(|x| x * x / 2.0 - 5f64.ln(), |x| x)).unwrap();
    let r_err = (dyson_report(&base).unwrap().r - dyson_report(&scaled).unwrap().r).abs();

    let tol = 1e-8;
    let sol = picard(&cfg, tol);
    let n = sol.f.len();
    let even_err = (0..n)
        .map(|i| (sol.f.values[i] - sol.f.values[n - 1 - i]).abs())
        .fold(0.0, f64::max);
    outcome(
        shift_err < 1e-12 && r_err < 1e-10 && even_err < 10.0 * tol,
        format!("shift {shift_err:.1e} (1e-12); dyson r rescale {r_err:.1e} (1e-10); evenness {even_err:.1e} (1e-7)"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        ("1", "linear fixed point, literal rho+ x^2/2", c1_literal_linear_fixed_point),
        ("1c", "linear fixed point, (1-rho+) x^2/2", c1_corrected_linear_fixed_point),
        ("2", "resolvent identity", c2_resolvent_identity),
        ("3", "Kesten-McKay", c3_kesten_mckay),
        ("4", "Dyson m=2 Gaussian", c4_dyson_m2),
        ("5", "Dyson m=3 Gaussian", c5_dyson_m3),
        ("6", "boundary-law identity", c6_boundary_law),
        ("7", "tree sampler statistics", c7_tree_sampler),
        ("8", "local-equation stationarity", c8_local_stationarity),
        ("9", "tree SDE with wired leaves", c9_tree_sde),
        ("10", "m=2 solver equivalence", c10_m2_equivalence),
        ("11", "regime table", c11_regime_table),
        ("12", "gauge/shift invariance", c12_invariance),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        ran += 1;
        let out = run();
        if !out.pass {
            failed += 1;
        }
        println!(
            "acceptance {id:>3} {} {name}: {}",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
