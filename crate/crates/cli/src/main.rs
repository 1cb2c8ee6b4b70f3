mod checks;
mod model;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use shm_core::analytics::{
    dyson_marginal, dyson_report, kesten_mckay_curve, kesten_mckay_integral, KM_NODES,
};
use shm_core::config::{named_confinement, ModelSpec};
use shm_core::edge_law::build_edge_law;
use shm_core::fixed_point::{PicardOptions, SolveStatus};
use shm_core::io::{
    write_boundary_csv, write_density_matrix_csv, write_json, write_samples_csv,
    write_solution_csv, write_table, write_trajectory_csv, SolutionSidecar,
};
use shm_core::local_sim::{run_stationarity_test, SimMode};
use shm_core::potentials::make_dyson_model;
use shm_core::tree::{
    distance_covariances, homogeneity_ks, markov_test, tree_stationarity, MarkovMethod, TreeBall,
    TreeSampler, MARKOV_MIN_SAMPLES,
};
use shm_core::ShmError;

use model::{solve, solve_default, Method, ModelArgs};

const EXIT_ERROR: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "shm", version, about = "Stationary homogeneous Markov laws on regular trees")]
struct Cli {
    /// Worker threads (default: all cores)
    #[arg(long, global = true, env = "SHM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the fixed-point problem and write F
    Solve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0.5)]
        damping: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        #[arg(long, value_enum, default_value_t = Method::Picard)]
        method: Method,
        /// Also write the joint density matrix (n x n CSV)
        #[arg(long)]
        matrix: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Exact samples of the ball density
    SampleTree {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Simulate the local equation or the wired tree SDE
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = Target::Local)]
        target: Target,
        #[arg(long, value_enum, default_value_t = Mode::Decoupled)]
        mode: Mode,
        /// Particles (local) or replicas (tree)
        #[arg(long = "N", alias = "n", default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long = "T", alias = "t-end", default_value_t = 10.0)]
        t_end: f64,
        /// Kernel-regression bandwidth (estimated mode)
        #[arg(long)]
        bandwidth: Option<f64>,
        /// Ball radius for the tree target
        #[arg(long, default_value_t = 2)]
        depth: usize,
        /// Root snapshots per replica for the tree target
        #[arg(long, default_value_t = 10)]
        snapshots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run named invariant checks and print a pass/fail table
    Verify {
        /// Run every named check
        #[arg(long)]
        all: bool,
        /// Run one named check (repeatable)
        #[arg(long = "check")]
        checks: Vec<String>,
        /// Also run the generic checks on this model file
        #[arg(long)]
        config: Vec<PathBuf>,
    },
    /// Closed-form curves: Kesten-McKay density, Dyson root and density
    Analytics {
        #[arg(long)]
        kesten_mckay: bool,
        #[arg(long)]
        dyson: bool,
        #[arg(long, default_value_t = 3)]
        m: usize,
        #[arg(long = "U", default_value = "gaussian")]
        u: String,
        #[arg(long, default_value_t = KM_NODES)]
        nodes: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Target {
    Local,
    Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Decoupled,
    Estimated,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    config_path: String,
    seed: Option<u64>,
    outputs: Vec<String>,
    timestamp: String,
    tool_version: String,
}

/// Collects written files for the manifest.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, ShmError> {
        std::fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: vec![],
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.display().to_string());
        p
    }

    fn finish(self, command: &str, config_path: String, seed: Option<u64>) -> Result<(), ShmError> {
        let manifest = RunManifest {
            command: command.into(),
            config_path,
            seed,
            outputs: self.files,
            timestamp: chrono::Utc::now().to_rfc3339(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
        };
        write_json(&self.dir.join("manifest.json"), &manifest)
    }
}

fn positive(name: &str, v: f64) -> Result<(), ShmError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ShmError::InvalidArgument(format!("{name} must be positive")))
    }
}

fn write_spec(out: &mut Outputs, spec: &ModelSpec) -> Result<(), ShmError> {
    let p = out.path("model.json");
    write_json(&p, spec)
}

fn run(cli: Cli) -> Result<u8, ShmError> {
    match cli.command {
        Command::Solve {
            model,
            damping,
            tol,
            max_iter,
            method,
            matrix,
            out,
        } => {
            let spec = model.spec()?;
            let cfg = spec.build()?;
            let opts = PicardOptions {
                damping,
                tol,
                max_iter,
            };
            let sol = solve(&cfg, method, opts)?;
            let mut outs = Outputs::new(&out)?;
            write_spec(&mut outs, &spec)?;
            write_solution_csv(&outs.path("F.csv"), &sol)?;
            write_json(&outs.path("F.json"), &SolutionSidecar::from(&sol))?;
            let converged = sol.status != SolveStatus::NotConverged;
            if converged {
                let law = build_edge_law(&cfg, &sol)?;
                write_boundary_csv(&outs.path("boundary.csv"), &law)?;
                write_json(&outs.path("edge_law.json"), &law.summary())?;
                if matrix {
                    write_density_matrix_csv(&outs.path("rho.csv"), &law)?;
                }
            }
            outs.finish("solve", model.config_path(), None)?;
            println!(
                "{}: {} iterations, residual {:.3e}",
                if converged { "converged" } else { "not converged" },
                sol.iterations,
                sol.residual
            );
            Ok(if converged { 0 } else { EXIT_NOT_CONVERGED })
        }
        Command::SampleTree {
            model,
            depth,
            samples,
            seed,
            out,
        } => {
            let spec = model.spec()?;
            let solved = solve_default(&spec)?;
            if !solved.sol.converged() {
                eprintln!("error: not converged");
                return Ok(EXIT_NOT_CONVERGED);
            }
            let sampler = TreeSampler::new(&solved.law)?;
            let ball = Arc::new(TreeBall::new(solved.cfg.m, depth)?);
            let draws = sampler.sample_many(&ball, samples, seed);
            let cov = distance_covariances(&draws);
            let markov = if depth >= 2 && samples >= MARKOV_MIN_SAMPLES {
                Some(markov_test(&draws, MarkovMethod::PartialCorrelation)?)
            } else {
                None
            };
            let homogeneity = if depth >= 2 { Some(homogeneity_ks(&draws)?) } else { None };
            let ratio = if cov.len() > 1 { Some(cov[1].covariance / cov[0].covariance) } else { None };
            let mut outs = Outputs::new(&out)?;
            write_spec(&mut outs, &spec)?;
            write_samples_csv(&outs.path("samples.csv"), &draws)?;
            write_json(
                &outs.path("summary.json"),
                &json!({
                    "m": solved.cfg.m,
                    "depth": depth,
                    "samples": samples,
                    "seed": seed,
                    "covariance": cov,
                    "covariance_ratio_1": ratio,
                    "markov": markov,
                    "homogeneity_ks": homogeneity,
                }),
            )?;
            outs.finish("sample-tree", model.config_path(), Some(seed))?;
            println!("{samples} samples of depth {depth} written to {}", out.display());
            Ok(0)
        }
        Command::Simulate {
            model,
            target,
            mode,
            n,
            dt,
            t_end,
            bandwidth,
            depth,
            snapshots,
            seed,
            out,
        } => {
            positive("dt", dt)?;
            positive("T", t_end)?;
            if let Some(h) = bandwidth {
                positive("bandwidth", h)?;
            }
            let spec = model.spec()?;
            let solved = solve_default(&spec)?;
            if !solved.sol.converged() {
                eprintln!("error: not converged");
                return Ok(EXIT_NOT_CONVERGED);
            }
            let mut outs = Outputs::new(&out)?;
            write_spec(&mut outs, &spec)?;
            match target {
                Target::Local => {
                    let mode = match mode {
                        Mode::Decoupled => SimMode::Decoupled,
                        Mode::Estimated => SimMode::Estimated,
                    };
                    let rep = run_stationarity_test(
                        &solved.cfg,
                        &solved.sol,
                        &solved.law,
                        n,
                        dt,
                        t_end,
                        mode,
                        bandwidth,
                        seed,
                    )?;
                    write_trajectory_csv(&outs.path("trajectory.csv"), &rep.trajectory)?;
                    write_json(
                        &outs.path("summary.json"),
                        &json!({
                            "target": "local",
                            "mode": rep.mode,
                            "N": rep.n,
                            "dt": rep.dt,
                            "T": rep.t_end,
                            "bandwidth": rep.bandwidth,
                            "seed": seed,
                            "ks_marginal": rep.ks_marginal,
                            "symmetry_ks": rep.symmetry_ks,
                        }),
                    )?;
                    println!("ks_marginal {:.4}, symmetry_ks {:.4}", rep.ks_marginal, rep.symmetry_ks);
                }
                Target::Tree => {
                    let sampler = TreeSampler::new(&solved.law)?;
                    let rep = tree_stationarity(
                        &solved.cfg,
                        &solved.sol,
                        &sampler,
                        depth,
                        dt,
                        t_end,
                        n,
                        snapshots,
                        seed,
                    )?;
                    write_json(&outs.path("summary.json"), &json!({
                        "target": "tree",
                        "depth": depth,
                        "dt": dt,
                        "T": t_end,
                        "seed": seed,
                        "report": rep,
                    }))?;
                    println!(
                        "root KS pooled {:.4}, final snapshot {:.4}, escapes {}",
                        rep.ks_pooled, rep.ks_final, rep.escapes
                    );
                }
            }
            outs.finish("simulate", model.config_path(), Some(seed))?;
            Ok(0)
        }
        Command::Verify { all, checks: names, config } => verify(all, &names, &config),
        Command::Analytics {
            kesten_mckay,
            dyson,
            m,
            u,
            nodes,
            out,
        } => {
            if m < 2 {
                return Err(ShmError::InvalidArgument("m must be ≥ 2".into()));
            }
            if !kesten_mckay && !dyson {
                return Err(ShmError::InvalidArgument("pass --kesten-mckay and/or --dyson".into()));
            }
            let mut outs = Outputs::new(&out)?;
            if kesten_mckay {
                let curve = kesten_mckay_curve(m, nodes)?;
                write_table(
                    &outs.path("kesten_mckay.csv"),
                    &["x", "density", "mass"],
                    curve.iter().map(|&(x, d, w)| vec![x, d, w]),
                )?;
                let mass = kesten_mckay_integral(m, |_| 1.0, nodes)?;
                let second = kesten_mckay_integral(m, |x| x * x, nodes)?;
                write_json(
                    &outs.path("kesten_mckay.json"),
                    &json!({ "m": m, "nodes": nodes, "mass": mass, "second_moment": second }),
                )?;
                println!("Kesten-McKay m = {m}: mass {mass:.10}, second moment {second:.8}");
            }
            if dyson {
                let cfg = make_dyson_model(m, named_confinement(&u)?)?;
                let rep = dyson_report(&cfg)?;
                let rho = dyson_marginal(&cfg, rep.r)?;
                write_json(&outs.path("dyson.json"), &rep)?;
                let grid = rho.grid;
                write_table(
                    &outs.path("dyson_density.csv"),
                    &["x", "rho_x"],
                    (0..grid.len()).map(|i| vec![grid.point(i), rho.values[i]]),
                )?;
                println!("Dyson m = {m}, U = {u}: r = {:.10}", rep.r);
            }
            outs.finish("analytics", String::new(), None)?;
            Ok(0)
        }
    }
}

fn verify(all: bool, names: &[String], configs: &[PathBuf]) -> Result<u8, ShmError> {
    let selected: Vec<&checks::Check> = if all {
        checks::CHECKS.iter().collect()
    } else {
        let mut v = vec![];
        for name in names {
            match checks::find(name) {
                Some(c) => v.push(c),
                None => {
                    eprintln!("error: unknown check '{name}'");
                    eprintln!("available checks:");
                    for n in checks::names() {
                        eprintln!("  {n}");
                    }
                    return Ok(EXIT_ERROR);
                }
            }
        }
        v
    };
    if selected.is_empty() && configs.is_empty() {
        eprintln!("error: pass --all, --check NAME or --config FILE");
        eprintln!("available checks: {}", checks::names().join(", "));
        return Ok(EXIT_ERROR);
    }
    let mut results: Vec<(String, checks::CheckOutcome)> = vec![];
    for c in selected {
        let out = (c.run)().unwrap_or_else(|e| checks::CheckOutcome {
            pass: false,
            detail: format!("error: {e}"),
            rows: vec![],
        });
        results.push((c.name.to_string(), out));
    }
    for path in configs {
        let cfg = ModelSpec::load(path)?.build()?;
        for (name, out) in checks::model_checks(&cfg)? {
            results.push((format!("{}:{name}", path.display()), out));
        }
    }
    let width = results.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    let mut failed = 0;
    for (name, out) in &results {
        if !out.pass {
            failed += 1;
        }
        println!("{name:<width$}  {}  {}", if out.pass { "PASS" } else { "FAIL" }, out.detail);
        for row in &out.rows {
            println!("    {row}");
        }
    }
    println!("{} checks, {} passed, {failed} failed", results.len(), results.len() - failed);
    Ok(if failed == 0 { 0 } else { EXIT_ERROR })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
