use std::fs;
use std::path::{Path, PathBuf};

use emocascade::cascade::{CascadeMode, RegistryConfig};
use emocascade::corpus::SyntheticSpec;
use emocascade::features::FeatureConfig;
use emocascade::sphmm::FusionWeight;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SEED_ENV: &str = "EMOCASCADE_SEED";

/// Settings shared by every subcommand. Loaded from JSON, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub features: FeatureConfig,
    /// Model sizes. Its seed, alpha and claimant count are taken from the top-level fields.
    pub training: RegistryConfig,
    /// Corpus shape for `synth`. Its seed is taken from the top-level field.
    pub synth: SyntheticSpec,
    pub alpha: f64,
    pub mode: CascadeMode,
    pub seed: Option<u64>,
    pub corpus: Option<PathBuf>,
    pub registry: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub claimants_per_gender: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            features: FeatureConfig::default(),
            training: RegistryConfig::compact(),
            synth: SyntheticSpec::default(),
            alpha: 0.5,
            mode: CascadeMode::ThreeStage,
            seed: None,
            corpus: None,
            registry: None,
            out: None,
            claimants_per_gender: 17,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Flag, then config file, then the environment, then 0.
    pub fn resolved_seed(&self) -> Result<u64, CliError> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
            Err(_) => Ok(0),
        }
    }

    pub fn fusion_weight(&self) -> Result<FusionWeight, CliError> {
        FusionWeight::new(self.alpha).map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn registry_config(&self) -> Result<RegistryConfig, CliError> {
        Ok(RegistryConfig {
            claimants_per_gender: self.claimants_per_gender,
            alpha: self.fusion_weight()?,
            seed: self.resolved_seed()?,
            ..self.training.clone()
        })
    }

    pub fn synthetic_spec(&self) -> Result<SyntheticSpec, CliError> {
        Ok(SyntheticSpec { seed: self.resolved_seed()?, ..self.synth.clone() })
    }

    pub fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
        match path {
            Some(p) if !p.as_os_str().is_empty() => Ok(p),
            _ => Err(CliError::Usage(format!("--{flag} is required"))),
        }
    }
}
