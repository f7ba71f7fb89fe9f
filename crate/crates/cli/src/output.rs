//! CSV tables and the JSON run manifest.
//!
//! Numbers are written in their shortest round-trip decimal form. Absent
//! values are written as `NaN`.

use std::fs;
use std::path::Path;

use gradvi_core::{Grid1D, SolverParams};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamsEcho {
    pub epsilon: f64,
    pub delta: f64,
    pub dt: f64,
    pub t_end: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub constraint_tol: f64,
}

impl From<&SolverParams> for ParamsEcho {
    fn from(p: &SolverParams) -> Self {
        Self {
            epsilon: p.epsilon,
            delta: p.delta,
            dt: p.dt,
            t_end: p.t_end,
            picard_tol: p.picard_tol,
            picard_max: p.picard_max,
            constraint_tol: p.constraint_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridEcho {
    pub x_left: f64,
    pub x_right: f64,
    pub n_cells: usize,
    pub h: f64,
}

impl From<&Grid1D> for GridEcho {
    fn from(g: &Grid1D) -> Self {
        Self {
            x_left: g.x_left(),
            x_right: g.x_right(),
            n_cells: g.n_cells(),
            h: g.h(),
        }
    }
}

/// One run of a ladder study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderEcho {
    pub label: String,
    pub params: ParamsEcho,
    pub grid: GridEcho,
}

/// A named acceptance bound. `pass` is true iff `measured <= bound`, so a
/// NaN measurement fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            bound,
            pass: measured <= bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Parameters of the main run; the finest member for ladder studies.
    pub params: Option<ParamsEcho>,
    pub grid: Option<GridEcho>,
    pub ladder: Vec<LadderEcho>,
    pub wall_time_s: f64,
    pub acceptance: Vec<Check>,
    /// Set when the command stopped before finishing.
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            params: None,
            grid: None,
            ladder: Vec::new(),
            wall_time_s: 0.0,
            acceptance: Vec::new(),
            error: None,
        }
    }

    pub fn echo(&mut self, params: &SolverParams, grid: &Grid1D) {
        self.params = Some(params.into());
        self.grid = Some(grid.into());
    }

    pub fn all_pass(&self) -> bool {
        self.acceptance.iter().all(|c| c.pass)
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| output_error(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| output_error(&path, e))
    }
}

fn output_error(path: &Path, err: impl std::fmt::Display) -> CliError {
    CliError::Output {
        path: path.display().to_string(),
        reason: err.to_string(),
    }
}

/// Writes `rows` under `header` to `dir/name`.
pub fn write_csv<R: Serialize>(dir: &Path, name: &str, header: &[&str], rows: &[R]) -> Result<(), CliError> {
    let path = dir.join(name);
    let fail = |e: csv::Error| output_error(&path, e);
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(&path).map_err(fail)?;
    writer.write_record(header).map_err(fail)?;
    for row in rows {
        writer.serialize(row).map_err(fail)?;
    }
    writer.flush().map_err(|e| output_error(&path, e))
}
