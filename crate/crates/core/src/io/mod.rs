//! File formats, run configuration and atomic output.

pub mod config;
pub mod depth_file;
pub mod records;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use config::RunConfig;
pub use depth_file::{decode_depth, encode_depth, read_depth};
pub use records::{
    encode_predictions, load_predictions, load_scene, load_scenes, save_predictions, save_scene, save_scenes,
    PredictionFrame,
};

/// Bytes destined for one output file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub path: PathBuf,
    pub role: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(path: PathBuf, role: &str, bytes: Vec<u8>) -> Self {
        Artifact {
            path,
            role: role.to_string(),
            bytes,
        }
    }

    pub fn digest(&self) -> String {
        sha256_hex(&self.bytes)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes every artifact through a temporary file in its target directory
/// and renames them into place only after all of them were written, so a
/// failure leaves no partial outputs behind.
pub fn write_all_atomic(artifacts: &[Artifact]) -> Result<()> {
    let mut staged = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let dir = match a.path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&a.path, e))?;
        tmp.write_all(&a.bytes).map_err(|e| Error::io(&a.path, e))?;
        tmp.as_file().sync_all().map_err(|e| Error::io(&a.path, e))?;
        staged.push((tmp, &a.path));
    }
    for (tmp, path) in staged {
        tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    }
    Ok(())
}

/// Manifest of generated files: names relative to `root`, sizes and SHA-256
/// digests, in the order given.
pub fn manifest(root: &Path, artifacts: &[Artifact], config_digest: &str, seed: u64) -> Value {
    let files: Vec<Value> = artifacts
        .iter()
        .map(|a| {
            let name = a.path.strip_prefix(root).unwrap_or(&a.path);
            json!({
                "path": name.to_string_lossy(),
                "role": a.role,
                "bytes": a.bytes.len(),
                "sha256": a.digest(),
            })
        })
        .collect();
    json!({
        "config_digest": config_digest,
        "seed": seed,
        "files": files,
    })
}

/// Pretty JSON with lexicographically ordered keys and a trailing newline.
pub fn json_bytes(value: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("values serialize");
    out.push(b'\n');
    out
}
