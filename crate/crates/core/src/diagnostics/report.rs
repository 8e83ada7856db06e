use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Where a measurement came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub sample_counts: Vec<usize>,
    pub config_hash: String,
}

/// Any serializable measurement together with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub kind: String,
    pub provenance: Provenance,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    pub fn new<C: Serialize>(
        kind: &str,
        config: &C,
        seed: u64,
        sample_counts: Vec<usize>,
        result: T,
    ) -> Result<Self> {
        Ok(Self {
            kind: kind.to_string(),
            provenance: Provenance {
                seed,
                sample_counts,
                config_hash: config_hash(config)?,
            },
            result,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// First 16 hex digits of the SHA-256 of the config's JSON form.
pub fn config_hash<C: Serialize>(config: &C) -> Result<String> {
    let text = serde_json::to_string(config)?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(hex::encode(digest)[..16].to_string())
}
