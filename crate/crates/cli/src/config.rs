//! Run configuration, budget grids and input files.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use ensrlab::filter::SolverConfig;
use ensrlab::JointDistribution;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub grid_resolution: f64,
    pub restarts: usize,
    /// Allowed negative slack before a solution counts as infeasible.
    pub tolerance: f64,
    pub output_format: OutputFormat,
    #[serde(skip)]
    pub output_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grid_resolution: 0.02,
            restarts: 32,
            tolerance: 1e-6,
            output_format: OutputFormat::Csv,
            output_path: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> CliResult<()> {
        if !(self.grid_resolution > 0.0 && self.grid_resolution <= 0.5) {
            return Err(CliError::Input(format!(
                "resolution {} must lie in (0, 0.5]",
                self.grid_resolution
            )));
        }
        if self.restarts == 0 {
            return Err(CliError::Input("restarts must be at least 1".into()));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(CliError::Input(format!(
                "tolerance {} must be non-negative",
                self.tolerance
            )));
        }
        Ok(())
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            seed: self.seed,
            grid_resolution: self.grid_resolution,
            restarts: self.restarts,
            ..SolverConfig::default()
        }
    }
}

/// Parses `start:stop:step` (inclusive of `stop` up to rounding) or a comma list.
pub fn parse_eps_grid(s: &str) -> CliResult<Vec<f64>> {
    let bad = |what: &str| CliError::Input(format!("bad budget grid '{s}': {what}"));
    let number = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| bad(&format!("'{t}' is not a number")))
    };
    let grid = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:stop:step"));
        }
        let (start, stop, step) = (number(parts[0])?, number(parts[1])?, number(parts[2])?);
        if !(step > 0.0) || stop < start {
            return Err(bad("need step > 0 and stop >= start"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        // Multiplying rather than accumulating keeps 0.08 * 3 from drifting.
        (0..=n)
            .map(|i| round_grid(start + step * i as f64))
            .collect()
    } else {
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(number)
            .collect::<CliResult<Vec<_>>>()?
    };
    if grid.is_empty() {
        return Err(bad("no budgets"));
    }
    if let Some(e) = grid.iter().find(|e| !e.is_finite() || **e < 0.0) {
        return Err(bad(&format!("budget {e} must be a non-negative number")));
    }
    Ok(grid)
}

/// Snaps values like `0.24000000000000002` back to `0.24`.
fn round_grid(x: f64) -> f64 {
    let r: f64 = format!("{x:.12}").parse().expect("formatted float parses");
    r
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("cannot parse {}: {e}", path.display())))
}

pub fn read_joint(path: &Path) -> CliResult<JointDistribution> {
    let file: ensrlab::prob::JointFile = read_json(path)?;
    Ok(JointDistribution::try_from(file)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_grid_is_inclusive_and_clean() {
        let g = parse_eps_grid("0.08:0.64:0.08").unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g[2], 0.24);
        assert_eq!(*g.last().unwrap(), 0.64);
    }

    #[test]
    fn list_grid() {
        assert_eq!(
            parse_eps_grid("0.1, 0.2,0.64").unwrap(),
            vec![0.1, 0.2, 0.64]
        );
    }

    #[test]
    fn malformed_grids_are_input_errors() {
        for s in ["", "a,b", "0:1", "0.5:0.1:0.1", "0:1:0", "-0.1"] {
            let e = parse_eps_grid(s).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{s}");
        }
    }

    #[test]
    fn config_bounds() {
        assert!(RunConfig::default().validate().is_ok());
        let bad = RunConfig {
            grid_resolution: 0.6,
            ..RunConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = RunConfig {
            restarts: 0,
            ..RunConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
