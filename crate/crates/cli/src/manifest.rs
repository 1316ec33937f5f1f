//! Reproducible run manifests: the config digest, effective tolerances,
//! iteration counts, wall time, and a checksum for every output file, so a
//! run can be audited or diffed without rerunning it.

use std::io::Read;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use stripfront::Result;

pub const MANIFEST_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    Ok(out)
}

#[derive(Serialize)]
pub struct OutputRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct Tolerances {
    pub outer: f64,
    pub inner: f64,
    pub linear: f64,
}

#[derive(Serialize)]
pub struct RunManifest {
    pub version: u32,
    pub command: String,
    pub config_path: String,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub grid: Value,
    pub tolerances: Tolerances,
    pub wall_seconds: f64,
    pub outputs: Vec<OutputRecord>,
    pub details: Value,
}

impl RunManifest {
    /// Hash and append an output file; the stored path is relative to the
    /// manifest's directory.
    pub fn record_output(&mut self, dir: &Path, path: &Path) -> Result<()> {
        let meta = std::fs::metadata(path)?;
        let rel = path
            .strip_prefix(dir)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned();
        self.outputs.push(OutputRecord {
            path: rel,
            bytes: meta.len(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}
