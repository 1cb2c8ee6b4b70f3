use std::path::PathBuf;

use clap::Args;
use serde_json::{json, Map, Value};
use shm_core::config::{GridSpec, ModelSpec};
use shm_core::edge_law::{build_edge_law, EdgeLaw};
use shm_core::fixed_point::{solve_picard, solve_power_m2, FixedPointSolution, PicardOptions};
use shm_core::numerics::{GridFunction, DEFAULT_HALF_WIDTH, DEFAULT_POINTS};
use shm_core::potentials::ModelConfig;
use shm_core::ShmError;

/// Model selection: either `--config FILE` or `--model` with its parameters.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// JSON model file (see README for the schema)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// linear | dyson | independent
    #[arg(long)]
    pub model: Option<String>,
    /// Tree degree
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    /// Linear model: z = U'' + m K''
    #[arg(long)]
    pub z: Option<f64>,
    /// Dyson confinement: gaussian | quartic
    #[arg(long = "U", default_value = "gaussian")]
    pub u: String,
    /// Independent model: U = q x^2 / 2
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    /// Grid half-width (grid is [-w, w])
    #[arg(long)]
    pub grid_half_width: Option<f64>,
    /// Number of grid points
    #[arg(long)]
    pub grid_n: Option<usize>,
}

impl ModelArgs {
    pub fn spec(&self) -> Result<ModelSpec, ShmError> {
        let mut spec = match (&self.config, &self.model) {
            (Some(_), Some(_)) => {
                return Err(ShmError::Config("use either --config or --model, not both".into()))
            }
            (Some(path), None) => ModelSpec::load(path)?,
            (None, Some(kind)) => {
                let mut params = Map::new();
                match kind.as_str() {
                    "linear" => {
                        let z = self
                            .z
                            .ok_or_else(|| ShmError::Config("--model linear needs --z".into()))?;
                        params.insert("z".into(), json!(z));
                    }
                    "dyson" => {
                        params.insert("U".into(), Value::String(self.u.clone()));
                    }
                    "independent" => {
                        params.insert("q".into(), json!(self.q));
                    }
                    other => {
                        return Err(ShmError::Config(format!(
                            "unknown model '{other}' (expected linear, dyson, independent)"
                        )))
                    }
                }
                ModelSpec {
                    m: self.m,
                    potential_kind: kind.clone(),
                    parameters: params,
                    grid: None,
                }
            }
            (None, None) => return Err(ShmError::Config("missing --config or --model".into())),
        };
        if self.grid_half_width.is_some() || self.grid_n.is_some() {
            let w = self.grid_half_width.unwrap_or(DEFAULT_HALF_WIDTH);
            spec.grid = Some(GridSpec {
                lo: -w,
                hi: w,
                n: self.grid_n.unwrap_or(DEFAULT_POINTS),
            });
        }
        Ok(spec)
    }

    pub fn config_path(&self) -> String {
        self.config
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Picard,
    Power,
}

pub fn solve(cfg: &ModelConfig, method: Method, opts: PicardOptions) -> Result<FixedPointSolution, ShmError> {
    match method {
        Method::Picard => solve_picard(cfg, opts, &GridFunction::zeros(cfg.grid)),
        Method::Power => solve_power_m2(cfg, opts.tol, opts.max_iter),
    }
}

pub struct Solved {
    pub cfg: ModelConfig,
    pub sol: FixedPointSolution,
    pub law: EdgeLaw,
}

/// Build, solve with default Picard settings, and construct the edge law.
pub fn solve_default(spec: &ModelSpec) -> Result<Solved, ShmError> {
    let cfg = spec.build()?;
    let sol = solve(&cfg, Method::Picard, PicardOptions::default())?;
    let law = build_edge_law(&cfg, &sol)?;
    Ok(Solved { cfg, sol, law })
}
