//! Experiment configuration file: optional population and system blocks,
//! defaulting to the reference parameterization.

use std::path::Path;

use serde::{Deserialize, Serialize};

use flmarket_core::population::{default_spec, default_system, PopulationSpec};
use flmarket_core::SystemConfig;

use crate::errors::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_spec")]
    pub population: PopulationSpec,
    #[serde(default = "default_system")]
    pub system: SystemConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            population: default_spec(),
            system: default_system(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        config
            .population
            .validate()
            .map_err(|e| CliError::Input(e.to_string()))?;
        config
            .system
            .validate()
            .map_err(|e| CliError::Input(e.to_string()))?;
        Ok(config)
    }
}
