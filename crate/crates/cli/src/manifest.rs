use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::Failure;

/// Machine-readable record of one command invocation.
///
/// Contains no timestamps, so reruns with the same flags produce identical bytes.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the resolved flags serialized as JSON.
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, args: &impl Serialize, seed: u64) -> Self {
        let canonical = serde_json::to_vec(args).expect("argument structs serialize");
        Self {
            command: command.to_owned(),
            config_hash: hex::encode(Sha256::digest(&canonical)),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: impl AsRef<Path>) {
        self.inputs.push(path.as_ref().display().to_string());
    }

    pub fn output(&mut self, path: impl AsRef<Path>) {
        self.outputs.push(path.as_ref().display().to_string());
    }

    pub fn metric(&mut self, key: &str, value: impl Into<f64>) {
        self.metrics.insert(key.to_owned(), value.into());
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), Failure> {
        write_file(path, self.to_json().as_bytes())
    }
}

/// `<path>.run.json` next to a primary output.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}

/// Writes `bytes`, creating missing parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure::io(parent.display(), e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Failure::io(path.display(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_depends_only_on_args() {
        let a = RunManifest::new("x", &("a", 1), 3);
        let b = RunManifest::new("x", &("a", 1), 3);
        let c = RunManifest::new("x", &("a", 2), 3);
        assert_eq!(a.config_hash, b.config_hash);
        assert_ne!(a.config_hash, c.config_hash);
        assert_eq!(a.config_hash.len(), 64);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(sidecar(Path::new("out/m.bin")), PathBuf::from("out/m.bin.run.json"));
    }
}
