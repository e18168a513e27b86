use std::fs;
use std::path::Path;

use vipera_core::dataset::DatasetManifest;

use crate::error::{Result, StoreError};

/// Reads and validates a JSON manifest.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    manifest.validate()?;
    Ok(manifest)
}

/// Pretty-printed JSON with a trailing newline.
pub fn manifest_to_string(manifest: &DatasetManifest) -> String {
    let mut s = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    s.push('\n');
    s
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<()> {
    let path = path.as_ref();
    manifest.validate()?;
    fs::write(path, manifest_to_string(manifest)).map_err(|e| StoreError::io(path, e))
}
