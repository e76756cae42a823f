//! Run manifests: enough provenance to re-run a command and confirm the
//! inputs were byte-identical.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    /// Resolved configuration as serialized JSON.
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub started_unix_secs: u64,
    pub finished_unix_secs: u64,
}

fn now_unix_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> Result<String, ManifestError> {
    let mut file = File::open(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

impl RunManifest {
    /// Starts a manifest; call [`RunManifest::finish_and_write`] when done.
    pub fn begin(
        command: &str,
        seed: Option<u64>,
        config: serde_json::Value,
        input_paths: &[&Path],
    ) -> Result<RunManifest, ManifestError> {
        let inputs = input_paths
            .iter()
            .map(|p| {
                Ok(InputDigest {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>, ManifestError>>()?;
        Ok(RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs,
            started_unix_secs: now_unix_secs(),
            finished_unix_secs: 0,
        })
    }

    pub fn finish_and_write(mut self, path: &Path) -> Result<(), ManifestError> {
        self.finished_unix_secs = now_unix_secs();
        let rendered = serde_json::to_string_pretty(&self)?;
        let mut file = File::create(path).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        file.write_all(rendered.as_bytes())
            .and_then(|_| file.write_all(b"\n"))
            .map_err(|source| ManifestError::Io {
                path: path.display().to_string(),
                source,
            })
    }
}
