//! Reproducibility sidecar written next to sweep and correlation outputs.
//! Two runs with the same inputs and seed produce manifests identical in
//! every field except the timestamp.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::perturb::PerturbationSpec;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepStamp {
    /// The grid name or file path as given on the command line.
    pub name: String,
    /// sha256 of the resolved setting list, so a renamed or edited grid file
    /// is still detectable.
    pub hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub global_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepStamp>,
    /// sha256 per input file, keyed by the path as given.
    pub input_hashes: BTreeMap<String, String>,
    /// Wall-clock stamp; the one field runs may differ in.
    pub timestamp_unix_secs: u64,
}

impl RunManifest {
    pub fn new(global_seed: u64) -> RunManifest {
        let timestamp_unix_secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            global_seed,
            sweep: None,
            input_hashes: BTreeMap::new(),
            timestamp_unix_secs,
        }
    }

    pub fn stamp_sweep(&mut self, name: &str, specs: &[PerturbationSpec]) {
        let canonical = serde_json::to_string(specs).expect("specs serialize");
        self.sweep =
            Some(SweepStamp { name: name.to_string(), hash: sha256_hex(canonical.as_bytes()) });
    }

    pub fn hash_input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.input_hashes.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }
}
