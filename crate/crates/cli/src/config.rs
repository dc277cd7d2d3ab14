//! Run configuration: `[model]`, `[region]` and `[experiment]` tables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spatial_lrd_core::limits::MIN_MC_SAMPLES;
use spatial_lrd_core::{
    CoefficientModel, Innovation, ModelSpec, RegionPrototype, RegionSpec, ScanOptions, ShellRule,
};

use crate::error::CliError;

fn default_rho() -> f64 {
    spatial_lrd_core::theta::DEFAULT_RHO
}

fn default_replicates() -> usize {
    2000
}

fn default_output() -> String {
    "out".into()
}

fn default_bins() -> usize {
    40
}

fn default_limit_samples() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Strictly increasing inflation factors, each at least 1.
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub t_rule: ShellRule,
    #[serde(default)]
    pub innovation: Innovation,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: String,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Sample count of the Monte Carlo cross-check of limit integrals.
    #[serde(default = "default_limit_samples")]
    pub limit_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub region: RegionSpec,
    pub experiment: ExperimentConfig,
}

/// Parses and validates a configuration; every default is filled in.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let cfg: RunConfig =
        toml::from_str(text).map_err(|e| CliError::Parse(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let e = &self.experiment;
        if e.lambda_grid.is_empty() {
            return Err(CliError::field(
                "experiment.lambda_grid",
                "must not be empty",
            ));
        }
        if let Some(l) = e
            .lambda_grid
            .iter()
            .find(|l| !(l.is_finite() && **l >= 1.0))
        {
            return Err(CliError::field(
                "experiment.lambda_grid",
                format!("{l} is below 1"),
            ));
        }
        if e.lambda_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CliError::field(
                "experiment.lambda_grid",
                "must be strictly increasing",
            ));
        }
        if !(e.rho.is_finite() && e.rho >= 2.0) {
            return Err(CliError::field(
                "experiment.rho",
                format!("must be at least 2, got {}", e.rho),
            ));
        }
        if let ShellRule::Fixed(t) = e.t_rule {
            if !(t.is_finite() && t >= 1.0) {
                return Err(CliError::field(
                    "experiment.t_rule",
                    "fixed shell width must be at least 1",
                ));
            }
        }
        if e.replicates < 100 {
            return Err(CliError::field(
                "experiment.replicates",
                format!("need at least 100, got {}", e.replicates),
            ));
        }
        if e.histogram_bins == 0 {
            return Err(CliError::field(
                "experiment.histogram_bins",
                "must be positive",
            ));
        }
        if e.limit_samples < MIN_MC_SAMPLES {
            return Err(CliError::field(
                "experiment.limit_samples",
                format!("need at least {MIN_MC_SAMPLES}"),
            ));
        }
        if e.output.is_empty() {
            return Err(CliError::field("experiment.output", "must not be empty"));
        }
        Ok(())
    }

    /// The configuration as TOML, with defaults written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configuration is always representable")
    }

    /// Builds the model and region; `base_dir` resolves relative table
    /// paths.
    pub fn build(
        &self,
        base_dir: Option<&Path>,
    ) -> Result<(CoefficientModel, RegionPrototype), CliError> {
        let model = self
            .model
            .build(base_dir)
            .map_err(|e| CliError::invalid("model", e))?;
        let region = self
            .region
            .build()
            .map_err(|e| CliError::invalid("region", e))?;
        if model.dim() != region.dim() {
            return Err(CliError::field(
                "region",
                format!(
                    "dimension {} does not match the model dimension {}",
                    region.dim(),
                    model.dim()
                ),
            ));
        }
        Ok((model, region))
    }

    pub fn scan_options(&self) -> ScanOptions {
        ScanOptions {
            rho: self.experiment.rho,
            shell_rule: self.experiment.t_rule,
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(&self.experiment.output)
    }
}
