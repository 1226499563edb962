//! File formats: annotation loading, run configuration, and text dumps.

use std::path::{Path, PathBuf};

use crate::error::Result;

pub mod annotations;
pub mod config;
pub mod dumps;

/// Writes a file atomically: the content lands in a sibling temp file
/// first and is renamed into place, so readers never observe a partial
/// write.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = PathBuf::from(path);
    let mut name = tmp
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    tmp.set_file_name(name);
    std::fs::write(&tmp, contents)?;
    if let Err(e) = std::fs::rename(&tmp, path) {
        let _ = std::fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}
