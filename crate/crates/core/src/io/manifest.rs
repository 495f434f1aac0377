//! Run manifest: full configuration, master seed and code version, written
//! next to every generated artifact so a run can be reproduced bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleEntry {
    pub file: String,
    pub driver: String,
    pub session: u32,
    pub force_train: bool,
    pub frames: usize,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub created_by: String,
    pub master_seed: u64,
    /// The generating command's full configuration, flattened to JSON.
    pub config: serde_json::Value,
    pub cycles: Vec<CycleEntry>,
}

impl Manifest {
    pub fn new(master_seed: u64, config: serde_json::Value) -> Self {
        Manifest {
            format_version: MANIFEST_FORMAT_VERSION,
            created_by: format!("ycycle-core {}", env!("CARGO_PKG_VERSION")),
            master_seed,
            config,
            cycles: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(format!("manifest: {e}")))
    }

    pub fn from_json(content: &str) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(content)
            .map_err(|e| Error::Format(format!("manifest parse: {e}")))?;
        if manifest.format_version != MANIFEST_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "manifest version {} unsupported",
                manifest.format_version
            )));
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&content)
    }
}
