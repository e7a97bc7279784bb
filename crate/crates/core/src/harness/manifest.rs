//! Run manifests: enough to regenerate every output byte for byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubstreamSeed {
    pub kappa_index: usize,
    pub kappa: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub params: serde_json::Value,
    pub master_seed: u64,
    pub substream_seeds: Vec<SubstreamSeed>,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    /// Hashes the named files inside `dir`.
    pub fn digest_outputs(dir: &Path, files: &[String]) -> std::io::Result<Vec<OutputDigest>> {
        files
            .iter()
            .map(|f| Ok(OutputDigest { file: f.clone(), sha256: sha256_hex(&fs::read(dir.join(f))?) }))
            .collect()
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(dir.join("manifest.json"), text + "\n")
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}
