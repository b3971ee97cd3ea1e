//! File-based run configuration. Every field has a default, so an empty
//! config file (or none at all) reproduces the standard experiment setup.

use std::path::Path;

use serde::{Deserialize, Serialize};

use popr::energy::DiscrepancyKind;
use popr::sampler::SamplerConfig;
use popr::toyenv::ToyEnvConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Ring environment used by dataset generation and sweeps.
    pub env: ToyEnvConfig,
    pub sampler: SamplerConfig,
    /// Trajectories per generated dataset.
    pub episodes: usize,
    /// ε values of the candidate mixture policies used by sweeps.
    pub candidate_epsilons: Vec<f64>,
    /// Seeded repetitions per sweep cell.
    pub repetitions: usize,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: ToyEnvConfig::default(),
            sampler: SamplerConfig::default(),
            episodes: 20,
            candidate_epsilons: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            repetitions: 5,
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Dataset sizes (trajectory counts) for the `datasize` axis.
    pub datasizes: Vec<usize>,
    /// Expert fractions for the `quality` axis.
    pub fractions: Vec<f64>,
    /// Chain lengths for the `iterations` axis.
    pub iterations: Vec<usize>,
    /// Discrepancy measures for the `discrepancy` axis.
    pub discrepancies: Vec<DiscrepancyKind>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            datasizes: vec![2, 10, 20, 50, 70, 100],
            fractions: (0..=10).map(|i| f64::from(i) / 10.0).collect(),
            iterations: vec![10, 50, 100, 200, 500],
            discrepancies: vec![
                DiscrepancyKind::Js,
                DiscrepancyKind::Kl,
                DiscrepancyKind::mmd_rbf_default(),
                DiscrepancyKind::mmd_multiscale_default(),
            ],
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.env.validate().map_err(CliError::usage)?;
        self.sampler.validate().map_err(CliError::usage)?;
        if self.episodes == 0 {
            return Err(CliError::Usage("episodes must be >= 1".into()));
        }
        if self.repetitions == 0 {
            return Err(CliError::Usage("repetitions must be >= 1".into()));
        }
        if self.candidate_epsilons.len() < 2 {
            return Err(CliError::Usage("need at least 2 candidate epsilons".into()));
        }
        if self.candidate_epsilons.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(CliError::Usage("candidate epsilons must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Load a config file, or the defaults when no path is given.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let config = match path {
        None => RunConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?
        }
    };
    config.validate()?;
    Ok(config)
}
