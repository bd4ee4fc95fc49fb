use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{sha256_file, State};
use crate::error::Result;
use crate::modality::Modality;
use crate::phantom::RespirationParams;
use crate::volume::{Geometry, RvolKind};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA: &str = "synthreg-manifest/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryRole {
    Labels,
    /// Exhale-to-inhale displacement: inhale labels at `x` equal the anatomy at `x + d(x)`.
    Field,
    Image,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub kind: RvolKind,
    pub role: EntryRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<State>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality: Option<Modality>,
    /// Label map drawn with the arms.
    #[serde(default)]
    pub arms: bool,
    /// Native window `[lo, hi]` that maps to `[-1, 1]`, images only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    pub sha256: String,
}

/// Everything written for one phantom model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub model: usize,
    pub seed: u64,
    /// Hash of the inputs that determine this model's files.
    pub fingerprint: String,
    pub geometry: Geometry,
    pub respiration: RespirationParams,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        crate::json::load_json(dir.as_ref().join(MANIFEST_FILE))
    }

    /// Whether every listed file exists with the recorded checksum.
    pub fn verify(&self, dir: &Path) -> bool {
        self.entries.iter().all(|e| {
            let p = dir.join(&e.file);
            p.is_file() && sha256_file(&p).map(|h| h == e.sha256).unwrap_or(false)
        })
    }

    pub fn image(&self, modality: Modality, state: State) -> Option<&ManifestEntry> {
        self.entries
            .iter()
            .find(|e| e.role == EntryRole::Image && e.modality == Some(modality) && e.state == Some(state))
    }

    /// Label map matching an image of `modality` (with arms for MRI when present).
    pub fn labels_for(&self, modality: Modality, state: State) -> Option<&ManifestEntry> {
        let arms = modality.has_arms();
        self.entries
            .iter()
            .filter(|e| e.role == EntryRole::Labels && e.state == Some(state))
            .find(|e| e.arms == arms)
            .or_else(|| {
                self.entries
                    .iter()
                    .find(|e| e.role == EntryRole::Labels && e.state == Some(state) && !e.arms)
            })
    }

    pub fn modalities(&self) -> Vec<Modality> {
        let mut m: Vec<Modality> = self.entries.iter().filter_map(|e| e.modality).collect();
        m.sort();
        m.dedup();
        m
    }
}
