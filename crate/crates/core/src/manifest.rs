//! Dataset manifest: speaker roles, clip paths, carriers, transcripts.
//!
//! The manifest is a JSON file; all paths inside it are relative to its own
//! directory so fixture trees stay relocatable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Target,
    SourcePool,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    M,
    F,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeakerEntry {
    pub role: Role,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gender: Option<Gender>,
    /// Training clips.
    pub clips: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test_clips: Vec<PathBuf>,
    /// The attacker-visible knowledge sample (targets only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knowledge: Option<PathBuf>,
    /// Phoneme transcripts, parallel to `clips` where present.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transcripts: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CarrierEntry {
    pub id: String,
    pub category: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub working_rate: u32,
    pub seed: u64,
    pub speakers: BTreeMap<String, SpeakerEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub carriers: Vec<CarrierEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratings: Option<PathBuf>,
    /// Directory the manifest was loaded from; never serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
        if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported schema version {}",
                manifest.schema_version
            )));
        }
        manifest.base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Serialization(e.to_string()))?;
        crate::report::write_atomic(path, text.as_bytes())
    }

    /// Resolve a manifest-relative path.
    pub fn resolve(&self, rel: &Path) -> PathBuf {
        if rel.is_absolute() {
            rel.to_path_buf()
        } else {
            self.base_dir.join(rel)
        }
    }

    pub fn speakers_with_role(&self, role: Role) -> impl Iterator<Item = (&String, &SpeakerEntry)> {
        self.speakers.iter().filter(move |(_, e)| e.role == role)
    }

    fn validate(&self) -> Result<()> {
        let mut carrier_ids = std::collections::BTreeSet::new();
        for c in &self.carriers {
            if !carrier_ids.insert(&c.id) {
                return Err(Error::Manifest(format!("duplicate carrier id `{}`", c.id)));
            }
        }
        for (id, entry) in &self.speakers {
            if entry.clips.is_empty() {
                return Err(Error::Manifest(format!("speaker `{id}` has no clips")));
            }
            if entry.role == Role::Target && entry.knowledge.is_none() {
                return Err(Error::Manifest(format!(
                    "target speaker `{id}` lacks a knowledge clip"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_manifest(dir: &Path) -> Manifest {
        let mut speakers = BTreeMap::new();
        speakers.insert(
            "spk0".to_string(),
            SpeakerEntry {
                role: Role::Target,
                gender: Some(Gender::M),
                clips: vec![PathBuf::from("a.wav")],
                test_clips: vec![],
                knowledge: Some(PathBuf::from("k.wav")),
                transcripts: vec![],
            },
        );
        Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            working_rate: 16_000,
            seed: 7,
            speakers,
            carriers: vec![],
            ratings: None,
            base_dir: dir.to_path_buf(),
        }
    }

    #[test]
    fn round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        tiny_manifest(dir.path()).save(&path).unwrap();
        let back = Manifest::load(&path).unwrap();
        assert_eq!(back.speakers.len(), 1);
        assert_eq!(back.working_rate, 16_000);
        assert_eq!(back.base_dir, dir.path());
    }

    #[test]
    fn duplicate_carrier_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = tiny_manifest(dir.path());
        m.carriers = vec![
            CarrierEntry {
                id: "x".into(),
                category: "natural".into(),
                path: "x.wav".into(),
            },
            CarrierEntry {
                id: "x".into(),
                category: "music".into(),
                path: "y.wav".into(),
            },
        ];
        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        assert!(Manifest::load(&path).is_err());
    }

    #[test]
    fn target_requires_knowledge_clip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = tiny_manifest(dir.path());
        m.speakers.get_mut("spk0").unwrap().knowledge = None;
        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        assert!(Manifest::load(&path).is_err());
    }
}
