//! JSON model definitions.
//!
//! ```json
//! { "m": 3, "potential_kind": "linear", "parameters": { "z": 4.0 },
//!   "grid": { "lo": -10.0, "hi": 10.0, "n": 2049 } }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Result, ShmError};
use crate::numerics::{Grid, GridFunction};
use crate::potentials::{
    make_dyson_model_on, make_linear_model_on, ModelConfig, Potential, PotentialPair,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> Self {
        GridSpec {
            lo: g.lo(),
            hi: g.hi(),
            n: g.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub m: usize,
    pub potential_kind: String,
    #[serde(default)]
    pub parameters: Map<String, Value>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

#[derive(Deserialize)]
struct LinearParams {
    z: f64,
}

#[derive(Deserialize)]
struct IndependentParams {
    q: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConfinementParam {
    Named(String),
    Coefficients(Vec<f64>),
}

#[derive(Deserialize)]
struct DysonParams {
    #[serde(rename = "U")]
    u: ConfinementParam,
}

#[derive(Deserialize)]
struct PolynomialParams {
    #[serde(rename = "U")]
    u: Vec<f64>,
    #[serde(rename = "K")]
    k: Vec<f64>,
}

#[derive(Deserialize)]
struct TabulatedParams {
    /// `U` on the model grid; `null` entries mean `+inf`.
    #[serde(rename = "U")]
    u: Vec<Option<f64>>,
    #[serde(rename = "K")]
    k: Vec<f64>,
}

/// Named confinements accepted by the Dyson kind and the CLI.
pub fn named_confinement(name: &str) -> Result<Potential> {
    match name {
        "gaussian" => Ok(Potential::quadratic(1.0)),
        "quartic" => Ok(Potential::polynomial(vec![0.0, 0.0, 0.0, 0.0, 0.25])),
        other => Err(ShmError::Config(format!(
            "unknown confinement '{other}' (expected gaussian or quartic)"
        ))),
    }
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ShmError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ShmError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn params<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(Value::Object(self.parameters.clone())).map_err(|e| {
            ShmError::Config(format!("parameters for '{}': {e}", self.potential_kind))
        })
    }

    pub fn grid(&self) -> Result<Grid> {
        match self.grid {
            Some(g) => Grid::new(g.lo, g.hi, g.n),
            None => Ok(Grid::default()),
        }
    }

    pub fn build(&self) -> Result<ModelConfig> {
        let grid = self.grid()?;
        match self.potential_kind.as_str() {
            "linear" => {
                let p: LinearParams = self.params()?;
                make_linear_model_on(self.m, p.z, grid)
            }
            "dyson" => {
                let p: DysonParams = self.params()?;
                let u = match p.u {
                    ConfinementParam::Named(name) => named_confinement(&name)?,
                    ConfinementParam::Coefficients(c) => Potential::polynomial(c),
                };
                make_dyson_model_on(self.m, u, grid)
            }
            "independent" => {
                let p: IndependentParams = self.params()?;
                let pair =
                    PotentialPair::new(Potential::quadratic(p.q), Potential::quadratic(0.0), &grid);
                ModelConfig::new(self.m, pair, grid)
            }
            "polynomial" => {
                let p: PolynomialParams = self.params()?;
                let pair = PotentialPair::new(
                    Potential::polynomial(p.u),
                    Potential::polynomial(p.k),
                    &grid,
                );
                ModelConfig::new(self.m, pair, grid)
            }
            "tabulated" => {
                let p: TabulatedParams = self.params()?;
                let values = p.u.into_iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
                let table = GridFunction::new(grid, values)
                    .map_err(|e| ShmError::Config(e.to_string()))?;
                let pair = PotentialPair::new(
                    Potential::tabulated(table),
                    Potential::polynomial(p.k),
                    &grid,
                );
                ModelConfig::new(self.m, pair, grid)
            }
            other => Err(ShmError::Config(format!(
                "unknown potential_kind '{other}' (expected linear, dyson, independent, polynomial, tabulated)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::PotentialKind;

    #[test]
    fn linear_config_round_trip() {
        let spec = ModelSpec::from_json(
            r#"{"m": 3, "potential_kind": "linear", "parameters": {"z": 4.0},
                "grid": {"lo": -8.0, "hi": 8.0, "n": 801}}"#,
        )
        .unwrap();
        let cfg = spec.build().unwrap();
        assert_eq!(cfg.m, 3);
        assert_eq!(cfg.grid.len(), 801);
        assert_eq!(cfg.u().kind(), &PotentialKind::Quadratic { coefficient: 1.0 });
    }

    #[test]
    fn dyson_config_accepts_names_and_coefficients() {
        let named = ModelSpec::from_json(
            r#"{"m": 2, "potential_kind": "dyson", "parameters": {"U": "gaussian"}}"#,
        )
        .unwrap();
        assert!(named.build().unwrap().k().is_log_repulsive());
        let coeffs = ModelSpec::from_json(
            r#"{"m": 2, "potential_kind": "dyson", "parameters": {"U": [0, 0, 0, 0, 0.25]}}"#,
        )
        .unwrap();
        assert!(coeffs.build().is_ok());
    }

    #[test]
    fn bad_configs_are_reported() {
        let unknown = ModelSpec::from_json(r#"{"m": 2, "potential_kind": "nope"}"#).unwrap();
        assert!(matches!(unknown.build(), Err(ShmError::Config(_))));
        let missing = ModelSpec::from_json(r#"{"m": 2, "potential_kind": "linear"}"#).unwrap();
        assert!(matches!(missing.build(), Err(ShmError::Config(_))));
        assert!(ModelSpec::from_json("{not json").is_err());
    }
}
