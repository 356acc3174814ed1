use std::fs;
use std::path::{Path, PathBuf};

use emocascade::cascade::RegistryConfig;
use emocascade::features::FeatureConfig;
use emocascade::Registry;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const ARCHIVE_FORMAT_VERSION: u32 = 1;
pub const ARCHIVE_FILE: &str = "registry.json";

/// Trained registry together with the settings it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryArchive {
    pub format_version: u32,
    pub seed: u64,
    pub features: FeatureConfig,
    pub training: RegistryConfig,
    pub registry: Registry,
}

impl RegistryArchive {
    pub fn new(seed: u64, features: FeatureConfig, training: RegistryConfig, registry: Registry) -> Self {
        RegistryArchive { format_version: ARCHIVE_FORMAT_VERSION, seed, features, training, registry }
    }

    /// Canonical text form: pretty JSON, shortest round-trip floats, trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("archive serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        let v: Version = serde_json::from_str(text).map_err(|e| CliError::Archive(e.to_string()))?;
        if v.format_version != ARCHIVE_FORMAT_VERSION {
            return Err(CliError::Archive(format!("unsupported format version {}", v.format_version)));
        }
        let archive: RegistryArchive = serde_json::from_str(text).map_err(|e| CliError::Archive(e.to_string()))?;
        archive.registry.validate()?;
        Ok(archive)
    }

    pub fn path_in(dir: &Path) -> PathBuf {
        dir.join(ARCHIVE_FILE)
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = Self::path_in(dir);
        fs::write(&path, self.to_json()).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = Self::path_in(dir);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        Self::from_json(&text)
    }

    pub fn check_features(&self, features: &FeatureConfig) -> Result<(), CliError> {
        if &self.features != features {
            return Err(CliError::ConfigMismatch);
        }
        Ok(())
    }
}
