//! Experiment orchestration: configuration, the closed control loop, sweeps,
//! CSV output and the coupling protocol for external simulators.

pub mod coupling;
mod output;
mod run;
mod sweep;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::ControllerConfig;
use crate::error::{Error, Result};
use crate::mesosim::SimConfig;
use crate::network::{generate_lattice, load_network, RoadNetwork};

pub use output::{
    mean_stderr, moving_average, read_trace_csv, summarize, summarize_trace_csv, write_atomic, write_summary_csv,
    write_timing_csv, write_trace_csv, Indicator, Indicators, SummaryRow, TraceRow,
};
pub use run::{controller_for_seed, run_experiment, run_seed, CycleRecord, ExperimentOutcome, RunResult};
pub use sweep::{
    sweep_generation_rate, sweep_horizon, sweep_network_size, CellCache, CellResult, SizeSweepRow, SweepOptions,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum NetworkSpec {
    Lattice {
        rows: usize,
        cols: usize,
        #[serde(default = "default_spacing")]
        spacing: f64,
    },
    File {
        path: PathBuf,
    },
}

fn default_spacing() -> f64 {
    100.0
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec::Lattice { rows: 5, cols: 5, spacing: default_spacing() }
    }
}

impl NetworkSpec {
    pub fn build(&self) -> Result<RoadNetwork> {
        match self {
            NetworkSpec::Lattice { rows, cols, spacing } => generate_lattice(*rows, *cols, *spacing),
            NetworkSpec::File { path } => load_network(path),
        }
    }
}

/// Where turning probabilities come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurningMode {
    /// From the routes of every generated trip.
    #[default]
    Routes,
    /// From turns observed so far.
    Online,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    pub network: NetworkSpec,
    pub sim: SimConfig,
    pub controller: ControllerConfig,
    /// One replication per seed; each seed drives demand and any controller
    /// randomness.
    pub seeds: Vec<u64>,
    pub turning: TurningMode,
    /// Directory for CSV output.
    pub output: Option<PathBuf>,
    /// Also write per-cycle flow estimates.
    pub write_estimates: bool,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            network: NetworkSpec::default(),
            sim: SimConfig::default(),
            controller: ControllerConfig::default(),
            seeds: vec![1, 2, 3],
            turning: TurningMode::Routes,
            output: None,
            write_estimates: false,
        }
    }
}

impl Experiment {
    pub fn from_json_str(text: &str) -> Result<Experiment> {
        let exp: Experiment = serde_json::from_str(text).map_err(|e| Error::from_json(&e))?;
        exp.validate()?;
        Ok(exp)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Experiment> {
        Experiment::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if let NetworkSpec::Lattice { rows, cols, spacing } = self.network {
            if rows < 2 || cols < 2 || !(spacing > 0.0 && spacing.is_finite()) {
                return Err(Error::Config(format!("invalid lattice {rows}x{cols} with spacing {spacing}")));
            }
        }
        self.sim.validate()?;
        self.controller.validate()?;
        if self.sim.duration < self.controller.tau {
            return Err(Error::Config(format!(
                "duration {} s is shorter than one control cycle ({} s)",
                self.sim.duration, self.controller.tau
            )));
        }
        Ok(())
    }

    /// Builds the network and checks the controller against it.
    pub fn network(&self) -> Result<Arc<RoadNetwork>> {
        let net = self.network.build()?;
        self.controller.weights(&net)?;
        Ok(Arc::new(net))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_round_trip() {
        let exp = Experiment::from_json_str("{}").unwrap();
        assert_eq!(exp, Experiment::default());
        let text = serde_json::to_string(&exp).unwrap();
        assert_eq!(Experiment::from_json_str(&text).unwrap(), exp);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(Experiment::from_json_str(r#"{"seeds": []}"#).is_err());
        assert!(Experiment::from_json_str(r#"{"seeds": [1, 1]}"#).is_err());
        assert!(Experiment::from_json_str(r#"{"sim": {"duration": 10}}"#).is_err());
        assert!(Experiment::from_json_str(r#"{"bogus": 1}"#).is_err());
        let err = Experiment::from_json_str("{\n  \"seeds\": [1,\n}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn network_spec_forms() {
        let exp = Experiment::from_json_str(r#"{"network": {"type": "lattice", "rows": 3, "cols": 4}}"#).unwrap();
        assert_eq!(exp.network().unwrap().num_controlled(), 8);
        let exp = Experiment::from_json_str(r#"{"network": {"type": "file", "path": "/nonexistent.json"}}"#).unwrap();
        assert!(exp.network().is_err());
    }
}
