//! Flat TOML run configuration.
//!
//! Every key is optional. A command reads the keys it needs and fills in its
//! own defaults; unknown keys are rejected so typos do not pass silently.

use std::path::Path;

use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// `[x_left, x_right]`.
    pub domain: Option<[f64; 2]>,
    pub n_cells: Option<usize>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub snapshot_times: Option<Vec<f64>>,
    /// Cell counts, or source shifts for `stability`.
    pub ladder: Option<Vec<f64>>,

    /// Slack used when labelling contact nodes.
    pub label_tol: Option<f64>,
    pub error_bound: Option<f64>,
    pub violation_bound: Option<f64>,
    pub boundary_bound: Option<f64>,
    pub gap_bound: Option<f64>,
    pub ratio_bound: Option<f64>,
    pub spread_bound: Option<f64>,

    // constant data of the stationary problem
    pub velocity: Option<f64>,
    pub reaction: Option<f64>,
    pub source: Option<f64>,
    pub bound: Option<f64>,
    pub steady_tol: Option<f64>,
    pub t_max: Option<f64>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads `path`, or returns the all-default configuration for `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                Self::parse(&text)
            }
        }
    }

    pub fn domain(&self) -> Result<(f64, f64), CliError> {
        let [a, b] = self.domain.unwrap_or([0.0, 1.0]);
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(CliError::Config(format!("domain must be an interval [a, b] with a < b, got [{a}, {b}]")));
        }
        Ok((a, b))
    }

    /// The sandpile studies only make sense on the unit interval.
    pub fn require_unit_domain(&self) -> Result<(), CliError> {
        let (a, b) = self.domain()?;
        if a == 0.0 && b == 1.0 {
            Ok(())
        } else {
            Err(CliError::Config(format!("this command runs on [0, 1], got [{a}, {b}]")))
        }
    }

    pub fn t_end(&self, default: f64) -> Result<f64, CliError> {
        let t = self.t_end.unwrap_or(default);
        if !(t >= 0.0 && t.is_finite()) {
            return Err(CliError::Config(format!("t_end must be finite and non-negative, got {t}")));
        }
        Ok(t)
    }

    /// Requested snapshot times up to `t_end`. Later ones are dropped.
    pub fn snapshot_times(&self, default: &[f64], t_end: f64) -> Result<Vec<f64>, CliError> {
        let times = self.snapshot_times.clone().unwrap_or_else(|| default.to_vec());
        if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(CliError::Config("snapshot_times must be finite and non-negative".to_string()));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(CliError::Config("snapshot_times must be sorted".to_string()));
        }
        Ok(times.into_iter().filter(|&t| t <= t_end).collect())
    }

    /// Acceptance bound `value`, or `default`. Must be finite and non-negative.
    pub fn bound_or(value: Option<f64>, name: &str, default: f64) -> Result<f64, CliError> {
        let b = value.unwrap_or(default);
        if !(b >= 0.0 && b.is_finite()) {
            return Err(CliError::Config(format!("{name} must be finite and non-negative, got {b}")));
        }
        Ok(b)
    }

    /// The ladder as cell counts.
    pub fn cell_ladder(&self, default: &[usize]) -> Result<Vec<usize>, CliError> {
        let Some(raw) = &self.ladder else {
            return Ok(default.to_vec());
        };
        if raw.is_empty() {
            return Err(CliError::Config("ladder is empty".to_string()));
        }
        raw.iter()
            .map(|&n| {
                if n >= 2.0 && n.fract() == 0.0 && n <= 1e7 {
                    Ok(n as usize)
                } else {
                    Err(CliError::Config(format!("ladder entries must be cell counts >= 2, got {n}")))
                }
            })
            .collect()
    }

    /// The ladder as nonzero real shifts.
    pub fn shift_ladder(&self, default: &[f64]) -> Result<Vec<f64>, CliError> {
        let ladder = self.ladder.clone().unwrap_or_else(|| default.to_vec());
        if ladder.is_empty() {
            return Err(CliError::Config("ladder is empty".to_string()));
        }
        if ladder.iter().any(|e| !(e.is_finite() && *e != 0.0)) {
            return Err(CliError::Config("ladder shifts must be finite and nonzero".to_string()));
        }
        Ok(ladder)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_keys() {
        let cfg = Config::parse("domain = [0.0, 2.0]\nn_cells = 50\nepsilon = 1e-3\nladder = [100, 200]\n").unwrap();
        assert_eq!(cfg.domain().unwrap(), (0.0, 2.0));
        assert_eq!(cfg.n_cells, Some(50));
        assert_eq!(cfg.cell_ladder(&[]).unwrap(), vec![100, 200]);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(matches!(Config::parse("epsilom = 1e-3"), Err(CliError::Config(_))));
    }

    #[test]
    fn empty_ladders_are_config_errors() {
        let cfg = Config::parse("ladder = []").unwrap();
        assert!(cfg.cell_ladder(&[100]).is_err());
        assert!(cfg.shift_ladder(&[0.1]).is_err());
    }

    #[test]
    fn fractional_cell_counts_are_rejected() {
        let cfg = Config::parse("ladder = [100.5]").unwrap();
        assert!(cfg.cell_ladder(&[100]).is_err());
    }

    #[test]
    fn snapshot_times_past_the_end_are_dropped() {
        let cfg = Config::default();
        assert_eq!(cfg.snapshot_times(&[0.0, 0.5, 1.0], 0.5).unwrap(), vec![0.0, 0.5]);
        let unsorted = Config::parse("snapshot_times = [0.5, 0.25]").unwrap();
        assert!(unsorted.snapshot_times(&[], 1.0).is_err());
    }

    #[test]
    fn negative_bounds_are_rejected() {
        assert!(Config::bound_or(Some(-1.0), "gap_bound", 0.05).is_err());
        assert_eq!(Config::bound_or(Some(0.0), "gap_bound", 0.05).unwrap(), 0.0);
    }
}
