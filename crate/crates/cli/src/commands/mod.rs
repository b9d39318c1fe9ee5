pub mod oracle;
pub mod overlay;
pub mod prune;
pub mod stats;
pub mod synth;
pub mod train;

use std::path::{Path, PathBuf};

use crate::failure::Failure;
use crate::manifest::{sidecar, RunManifest};

/// Writes the run manifest to `explicit`, or next to `primary_output`.
fn emit(manifest: &RunManifest, explicit: Option<&PathBuf>, primary_output: &Path) -> Result<(), Failure> {
    let path = explicit.cloned().unwrap_or_else(|| sidecar(primary_output));
    manifest.write(&path)
}
