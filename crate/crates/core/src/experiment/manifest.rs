use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::write_atomic;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Streams a file through SHA-256.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// What a completed stage consumed and produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hash over the stage's configuration slice and its input hashes.
    pub fingerprint: String,
    /// Output file (relative to the run directory) to content hash.
    pub outputs: BTreeMap<String, String>,
}

/// Seeds, tool version, and per-stage content hashes of a run directory.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub seed: u64,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn new(seed: u64) -> Self {
        Manifest {
            tool: format!("lightningnet {}", env!("CARGO_PKG_VERSION")),
            seed,
            stages: BTreeMap::new(),
        }
    }

    /// Loads the manifest of `dir`; a missing or unreadable one starts fresh.
    pub fn load_or_new(dir: &Path, seed: u64) -> Manifest {
        let path = dir.join(MANIFEST_FILE);
        match std::fs::read(&path) {
            Ok(bytes) => match serde_json::from_slice::<Manifest>(&bytes) {
                Ok(m) if m.seed == seed => m,
                Ok(_) => Manifest::new(seed),
                Err(e) => {
                    log::warn!("ignoring unreadable {}: {e}", path.display());
                    Manifest::new(seed)
                }
            },
            Err(_) => Manifest::new(seed),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(self).map_err(|e| Error::format(e.to_string()))?;
        write_atomic(&dir.join(MANIFEST_FILE), &bytes)
    }

    /// True when `stage` last ran with this fingerprint and every output it
    /// wrote is still present and unmodified.
    pub fn is_fresh(&self, dir: &Path, stage: &str, fingerprint: &str) -> bool {
        let Some(rec) = self.stages.get(stage) else {
            return false;
        };
        rec.fingerprint == fingerprint
            && rec
                .outputs
                .iter()
                .all(|(file, hash)| sha256_file(&dir.join(file)).is_ok_and(|h| &h == hash))
    }

    /// Hashes the listed outputs and records the stage as complete.
    pub fn record(&mut self, dir: &Path, stage: &str, fingerprint: String, outputs: &[String]) -> Result<()> {
        let mut hashes = BTreeMap::new();
        for file in outputs {
            hashes.insert(file.clone(), sha256_file(&dir.join(file))?);
        }
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                fingerprint,
                outputs: hashes,
            },
        );
        Ok(())
    }

    pub fn output_hash(&self, stage: &str, file: &str) -> Option<&str> {
        self.stages.get(stage)?.outputs.get(file).map(String::as_str)
    }
}

/// Fingerprint of a stage run: its name, configuration, and input hashes.
pub fn fingerprint<T: Serialize>(stage: &str, config: &T, inputs: &[(String, String)]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(stage.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(config).map_err(|e| Error::format(e.to_string()))?);
    for (name, hash) in inputs {
        h.update([0]);
        h.update(name.as_bytes());
        h.update([0]);
        h.update(hash.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}
