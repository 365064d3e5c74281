//! Run manifests and artifact persistence. Every command writes its files
//! through an [`Artifacts`] collector, which records a content hash per
//! file, and closes the run with a manifest listing the configuration,
//! input hashes, outputs, and headline results.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use scalesep::io::matrix_to_csv;
use scalesep::{Error, Result};

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub inputs: Vec<FileRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<FileRecord>,
    pub results: Value,
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest.as_slice() {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Hashes an input file in place, keyed by the path the user gave.
pub fn hash_input(path: &Path) -> Result<FileRecord> {
    let bytes = fs::read(path)?;
    Ok(FileRecord {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

fn to_pretty<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// Output-directory writer; file names are recorded relative to the
/// directory so a manifest stays valid when the directory moves.
pub struct Artifacts {
    dir: PathBuf,
    outputs: Vec<FileRecord>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        fs::write(self.dir.join(name), text)?;
        self.outputs.push(FileRecord {
            path: name.to_string(),
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(())
    }

    pub fn write_matrix(&mut self, name: &str, m: &DMatrix<f64>) -> Result<()> {
        self.write_text(name, &matrix_to_csv(m))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write_text(name, &to_pretty(value)?)
    }

    pub fn outputs(&self) -> Vec<FileRecord> {
        self.outputs.clone()
    }

    /// Writes manifest.json last; the manifest lists every other artifact
    /// but not itself.
    pub fn finish(self, manifest: &RunManifest) -> Result<()> {
        fs::write(self.dir.join("manifest.json"), to_pretty(manifest)?)?;
        Ok(())
    }
}
