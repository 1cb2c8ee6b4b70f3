//! CSV and JSON writers for solver, sampler and simulation outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::edge_law::EdgeLaw;
use crate::error::{Result, ShmError};
use crate::fixed_point::{FixedPointSolution, SolveMethod, SolveStatus};
use crate::local_sim::TrajectoryRow;
use crate::tree::TreeSample;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| ShmError::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Header plus rows of numbers.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSidecar {
    #[serde(rename = "C")]
    pub c: f64,
    pub residual: f64,
    pub iterations: usize,
    pub integrability: f64,
    pub status: SolveStatus,
    pub method: SolveMethod,
}

impl From<&FixedPointSolution> for SolutionSidecar {
    fn from(s: &FixedPointSolution) -> Self {
        SolutionSidecar {
            c: s.c,
            residual: s.residual,
            iterations: s.iterations,
            integrability: s.integrability,
            status: s.status,
            method: s.method,
        }
    }
}

/// `x, F, F', exp(-F)`.
pub fn write_solution_csv(path: &Path, sol: &FixedPointSolution) -> Result<()> {
    let df = sol.derivative();
    let grid = sol.f.grid;
    write_table(
        path,
        &["x", "F", "dF", "exp_neg_F"],
        (0..grid.len()).map(|i| {
            let f = sol.f.values[i];
            vec![grid.point(i), f, df.values[i], (-f).exp()]
        }),
    )
}

/// `x, l, rho_x`.
pub fn write_boundary_csv(path: &Path, law: &EdgeLaw) -> Result<()> {
    let grid = law.grid();
    write_table(
        path,
        &["x", "l", "rho_x"],
        (0..grid.len()).map(|i| vec![grid.point(i), law.l.values[i], law.rho_x.values[i]]),
    )
}

/// Joint density, one row per `x`, columns `y` (header holds the grid).
pub fn write_density_matrix_csv(path: &Path, law: &EdgeLaw) -> Result<()> {
    let grid = law.grid();
    let mut w = create(path)?;
    let header: Vec<String> = grid.points().iter().map(|y| y.to_string()).collect();
    writeln!(w, "x,{}", header.join(","))?;
    for i in 0..grid.len() {
        let row: Vec<String> = law.rho_row(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{},{}", grid.point(i), row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// One row per sample, one column per vertex address (`root` for the root).
pub fn write_samples_csv(path: &Path, samples: &[TreeSample]) -> Result<()> {
    let mut w = create(path)?;
    if let Some(first) = samples.first() {
        let ball = &first.ball;
        let header: Vec<&str> = (0..ball.len())
            .map(|v| if v == 0 { "root" } else { ball.address(v) })
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for s in samples {
            let row: Vec<String> = s.values.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory_csv(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    write_table(
        path,
        &["time", "mean_x", "var_x", "cov_xy", "ks"],
        rows.iter().map(|r| vec![r.time, r.mean_x, r.var_x, r.cov_xy, r.ks]),
    )
}
