//! Report plumbing: atomic file writes, config hashing, and the JSON header
//! every artifact embeds so runs stay traceable to their configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Header embedded in every emitted artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    /// Which SRS model produced perception scores ("heuristic" or a path).
    pub srs_provenance: String,
}

impl ReportHeader {
    pub fn new(config_hash: impl Into<String>, seed: u64, srs_provenance: impl Into<String>) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            config_hash: config_hash.into(),
            seed,
            srs_provenance: srs_provenance.into(),
        }
    }
}

/// Hash of a serializable configuration (first 16 hex chars of SHA-256 over
/// its canonical JSON).
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let json = serde_json::to_string(config).map_err(|e| Error::Serialization(e.to_string()))?;
    let digest = Sha256::digest(json.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok(hex[..16].to_string())
}

/// Write via a temporary file in the same directory, then rename.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = path.to_path_buf();
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".into());
    tmp.set_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Serialize a report to pretty JSON and write it atomically.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Serialization(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        #[derive(Serialize)]
        struct Cfg {
            a: u32,
            b: String,
        }
        let h1 = config_hash(&Cfg { a: 1, b: "x".into() }).unwrap();
        let h2 = config_hash(&Cfg { a: 1, b: "x".into() }).unwrap();
        let h3 = config_hash(&Cfg { a: 2, b: "x".into() }).unwrap();
        assert_eq!(h1, h2);
        assert_ne!(h1, h3);
        assert_eq!(h1.len(), 16);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("r.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert!(!dir.path().join("sub").join(".r.txt.tmp").exists());
    }
}
