//! Output bundles: files staged in a temporary directory, checksummed into
//! `manifest.json`, verified, then moved into place with one rename.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

use crate::config::Seeds;

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub seeds: Seeds,
    /// Checksums of input files the run read, keyed by role.
    pub inputs: BTreeMap<String, String>,
    /// Checksums of every other file in the bundle.
    pub files: BTreeMap<String, String>,
}

pub struct Staging {
    dir: TempDir,
    target: PathBuf,
    files: BTreeMap<String, String>,
}

impl Staging {
    pub fn new(target: impl Into<PathBuf>) -> Result<Self> {
        let target = target.into();
        if target.exists() && !is_replaceable(&target)? {
            bail!(
                "{} exists and is not an output bundle; refusing to overwrite it",
                target.display()
            );
        }
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).with_context(|| format!("cannot create {}", parent.display()))?;
        let dir = TempDir::with_prefix_in(".creditvis-staging-", &parent)
            .with_context(|| format!("cannot stage in {}", parent.display()))?;
        Ok(Staging {
            dir,
            target,
            files: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        ensure!(name != MANIFEST && !self.files.contains_key(name), "duplicate bundle file {name}");
        fs::write(self.dir.path().join(name), bytes).with_context(|| format!("cannot write {name}"))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Writes the manifest, re-verifies every checksum and moves the bundle
    /// into place, replacing a previous bundle at the target.
    pub fn commit(self, mut manifest: Manifest) -> Result<PathBuf> {
        manifest.files = self.files.clone();
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(self.dir.path().join(MANIFEST), bytes)?;
        verify_bundle(self.dir.path())?;

        if self.target.exists() {
            fs::remove_dir_all(&self.target)
                .with_context(|| format!("cannot replace {}", self.target.display()))?;
        }
        let staged = self.dir.keep();
        if let Err(e) = fs::rename(&staged, &self.target) {
            let _ = fs::remove_dir_all(&staged);
            return Err(e).with_context(|| format!("cannot move bundle to {}", self.target.display()));
        }
        Ok(self.target)
    }
}

/// An empty directory or a previous bundle may be replaced.
fn is_replaceable(path: &Path) -> Result<bool> {
    if !path.is_dir() {
        return Ok(false);
    }
    if path.join(MANIFEST).is_file() {
        return Ok(true);
    }
    Ok(fs::read_dir(path)?.next().is_none())
}

/// Reads `manifest.json` in `dir` and checks every listed file against it.
pub fn verify_bundle(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let manifest: Manifest = serde_json::from_str(&text).with_context(|| format!("malformed {}", path.display()))?;
    for (name, expected) in &manifest.files {
        let bytes = fs::read(dir.join(name)).with_context(|| format!("bundle file {name} missing"))?;
        ensure!(&sha256_hex(&bytes) == expected, "checksum mismatch for {name}");
    }
    Ok(manifest)
}
