use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{EntryRole, Manifest, ManifestEntry, MANIFEST_FILE, MANIFEST_SCHEMA};
use super::{sha256_hex, worker_pool, write_atomic, Resolution, State};
use crate::error::{Error, Result};
use crate::modality::{simulate, AcquisitionSpec, FovCylinder, Modality, NoiseSpec, TissueTable, VibeParams};
use crate::phantom::{phantom_state, respiration_field, PhantomSpec, RespirationParams};
use crate::volume::{write_rvol, Geometry, Grid, RvolVoxel};

/// Noise texture peak used by the default acquisitions, cycles per mm.
const DEFAULT_NOISE_PEAK: f64 = 0.08;

fn default_n_models() -> usize {
    56
}

fn default_modalities() -> Vec<Modality> {
    Modality::ALL.to_vec()
}

fn default_ct() -> AcquisitionSpec {
    AcquisitionSpec::ct(120, NoiseSpec::textured(39.0, DEFAULT_NOISE_PEAK))
}

fn default_cbct() -> AcquisitionSpec {
    AcquisitionSpec::cbct(120, FovCylinder::default(), NoiseSpec::textured(52.0, DEFAULT_NOISE_PEAK))
}

fn default_mri() -> AcquisitionSpec {
    AcquisitionSpec::mri(VibeParams::default(), NoiseSpec::textured(25.0, DEFAULT_NOISE_PEAK))
}

fn default_output() -> PathBuf {
    PathBuf::from("dataset")
}

/// What `generate` produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    #[serde(default = "default_n_models")]
    pub n_models: usize,
    /// Phantom seed per model; defaults to `base_seed + model index`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub base_seed: u64,
    /// Template for every model; its seed is replaced per model.
    #[serde(default = "default_phantom")]
    pub phantom: PhantomSpec,
    /// Breathing amplitudes shared by all models unless overridden.
    #[serde(default)]
    pub respiration: RespirationParams,
    /// Per-model breathing amplitudes; length must equal `n_models` when given.
    #[serde(default)]
    pub respiration_per_model: Option<Vec<RespirationParams>>,
    #[serde(default = "default_modalities")]
    pub modalities: Vec<Modality>,
    #[serde(default = "default_ct")]
    pub ct: AcquisitionSpec,
    #[serde(default = "default_cbct")]
    pub cbct: AcquisitionSpec,
    #[serde(default = "default_mri")]
    pub mri: AcquisitionSpec,
    /// Tissue table JSON; the built-in table when absent.
    #[serde(default)]
    pub tissue_table: Option<PathBuf>,
    #[serde(default)]
    pub resolution: Resolution,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
}

fn default_phantom() -> PhantomSpec {
    PhantomSpec::new(0)
}

impl Default for DatasetConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl DatasetConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let c: Self = crate::json::load_json(path)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_models < 1 {
            return bad("n_models must be >= 1".into());
        }
        if let Some(s) = &self.seeds {
            if s.len() != self.n_models {
                return bad(format!("{} seeds for {} models", s.len(), self.n_models));
            }
        }
        if let Some(r) = &self.respiration_per_model {
            if r.len() != self.n_models {
                return bad(format!("{} respiration entries for {} models", r.len(), self.n_models));
            }
            for p in r {
                p.validate().map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        self.respiration.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.modalities.is_empty() {
            return bad("no modalities requested".into());
        }
        for m in Modality::ALL {
            let a = self.acquisition(m);
            if a.modality != m {
                return bad(format!("acquisition under '{m}' is for {}", a.modality));
            }
            a.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn acquisition(&self, m: Modality) -> &AcquisitionSpec {
        match m {
            Modality::Ct => &self.ct,
            Modality::Cbct => &self.cbct,
            Modality::Mri => &self.mri,
        }
    }

    pub fn seed(&self, model: usize) -> u64 {
        match &self.seeds {
            Some(s) => s[model],
            None => self.base_seed.wrapping_add(model as u64),
        }
    }

    pub fn respiration_for(&self, model: usize) -> RespirationParams {
        let p = match &self.respiration_per_model {
            Some(r) => r[model],
            None => self.respiration,
        };
        p.at_phase(1.0)
    }

    pub fn phantom_for(&self, model: usize) -> PhantomSpec {
        PhantomSpec {
            seed: self.seed(model),
            ..self.phantom.clone()
        }
    }

    pub fn tissue(&self) -> Result<TissueTable> {
        match &self.tissue_table {
            Some(p) => TissueTable::load(p),
            None => Ok(TissueTable::builtin()),
        }
    }

    fn sorted_modalities(&self) -> Vec<Modality> {
        let mut m = self.modalities.clone();
        m.sort();
        m.dedup();
        m
    }
}

/// Directory of one model inside a dataset.
pub fn model_dir(root: &Path, model: usize) -> PathBuf {
    root.join(format!("model_{model:03}"))
}

/// Deterministic sub-seed derivation (SplitMix64 finalizer).
fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn modality_index(m: Modality) -> u64 {
    Modality::ALL.iter().position(|&x| x == m).expect("listed") as u64
}

/// Acquisition with this model's seeds filled in.
pub(crate) fn seeded_acquisition(cfg: &DatasetConfig, m: Modality, seed: u64, state: State) -> AcquisitionSpec {
    let state_idx = if state == State::Exhale { 0 } else { 1 };
    cfg.acquisition(m).clone().with_seeds(
        derive_seed(seed, 1),
        derive_seed(seed, 100 + 2 * modality_index(m) + state_idx),
    )
}

#[derive(Serialize)]
struct Fingerprint<'a> {
    schema: &'a str,
    phantom: &'a PhantomSpec,
    respiration: RespirationParams,
    geometry: Geometry,
    tissue: &'a TissueTable,
    acquisitions: Vec<AcquisitionSpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub written: Vec<usize>,
    pub skipped: Vec<usize>,
    pub failed: Vec<(usize, String)>,
}

impl GenerateSummary {
    pub fn is_complete(&self) -> bool {
        self.failed.is_empty()
    }
}

/// Write every model of `cfg` under `cfg.output_dir`, skipping models whose
/// manifest already matches the configuration and the files on disk.
pub fn cmd_generate(cfg: &DatasetConfig) -> Result<GenerateSummary> {
    cfg.validate()?;
    let table = cfg.tissue()?;
    let root = &cfg.output_dir;
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut resolved = serde_json::to_string_pretty(cfg)?;
    resolved.push('\n');
    let cfg_path = root.join("dataset.json");
    if std::fs::read(&cfg_path).ok().as_deref() != Some(resolved.as_bytes()) {
        write_atomic(&cfg_path, resolved.as_bytes())?;
    }
    let pool = worker_pool(cfg.workers)?;
    let outcomes: Vec<(usize, Result<bool>)> = pool.install(|| {
        (0..cfg.n_models)
            .into_par_iter()
            .map(|m| (m, generate_model(cfg, &table, m)))
            .collect()
    });
    let mut summary = GenerateSummary::default();
    for (m, r) in outcomes {
        match r {
            Ok(true) => summary.written.push(m),
            Ok(false) => summary.skipped.push(m),
            Err(e) => {
                log::error!("model {m}: {e}");
                summary.failed.push((m, e.to_string()));
            }
        }
    }
    Ok(summary)
}

fn encode<T: RvolVoxel>(g: &Grid<T>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_rvol(g, &mut buf)?;
    Ok(buf)
}

/// Returns `Ok(false)` when the model was already complete.
fn generate_model(cfg: &DatasetConfig, table: &TissueTable, model: usize) -> Result<bool> {
    let dir = model_dir(&cfg.output_dir, model);
    let seed = cfg.seed(model);
    let spec = cfg.phantom_for(model);
    let resp = cfg.respiration_for(model);
    let geometry = cfg.resolution.geometry();
    let modalities = cfg.sorted_modalities();
    let acquisitions: Vec<AcquisitionSpec> = modalities
        .iter()
        .flat_map(|&m| State::BOTH.map(|s| seeded_acquisition(cfg, m, seed, s)))
        .collect();
    let fingerprint = sha256_hex(&serde_json::to_vec(&Fingerprint {
        schema: MANIFEST_SCHEMA,
        phantom: &spec,
        respiration: resp,
        geometry,
        tissue: table,
        acquisitions,
    })?);
    if let Ok(old) = Manifest::load(&dir) {
        if old.fingerprint == fingerprint && old.verify(&dir) {
            log::info!("model {model}: up to date");
            return Ok(false);
        }
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        std::fs::remove_file(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    }
    let mut written: Vec<PathBuf> = Vec::new();
    let result = write_model(&dir, &spec, resp, &geometry, table, cfg, &modalities, seed, &mut written).and_then(|entries| {
        let manifest = Manifest {
            schema: MANIFEST_SCHEMA.to_string(),
            model,
            seed,
            fingerprint,
            geometry,
            respiration: resp,
            entries,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&manifest_path, text.as_bytes())
    });
    if let Err(e) = result {
        for p in &written {
            let _ = std::fs::remove_file(p);
        }
        return Err(e);
    }
    log::info!("model {model}: wrote {} files", written.len() + 1);
    Ok(true)
}

#[allow(clippy::too_many_arguments)]
fn write_model(
    dir: &Path,
    spec: &PhantomSpec,
    resp: RespirationParams,
    geometry: &Geometry,
    table: &TissueTable,
    cfg: &DatasetConfig,
    modalities: &[Modality],
    seed: u64,
    written: &mut Vec<PathBuf>,
) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>, entry: ManifestEntry, written: &mut Vec<PathBuf>| -> Result<()> {
        let path = dir.join(&name);
        let hash = sha256_hex(&bytes);
        // unchanged files are left alone so reruns do not touch them
        let same = std::fs::read(&path).map(|b| sha256_hex(&b) == hash).unwrap_or(false);
        if !same {
            write_atomic(&path, &bytes)?;
            written.push(path);
        }
        entries.push(ManifestEntry {
            file: name,
            sha256: hash,
            ..entry
        });
        Ok(())
    };
    let with_arms = modalities.iter().any(|m| m.has_arms());
    let arms_spec = spec.clone().with_arms(true);
    let plain_spec = spec.clone().with_arms(false);
    for state in State::BOTH {
        let p = resp.at_phase(state.phase());
        let labels = phantom_state(&plain_spec, &p, geometry)?;
        let arm_labels = if with_arms { Some(phantom_state(&arms_spec, &p, geometry)?) } else { None };
        let label_entry = |arms: bool| ManifestEntry {
            file: String::new(),
            kind: crate::volume::RvolKind::Label,
            role: EntryRole::Labels,
            state: Some(state),
            modality: None,
            arms,
            window: None,
            sha256: String::new(),
        };
        put(format!("labels_{state}.rvol"), encode(&labels)?, label_entry(false), written)?;
        if let Some(l) = &arm_labels {
            put(format!("labels_{state}_arms.rvol"), encode(l)?, label_entry(true), written)?;
        }
        if state == State::Inhale {
            let field = respiration_field(&plain_spec, &p, geometry)?;
            put(
                "field_inhale.rvol".into(),
                encode(&field)?,
                ManifestEntry {
                    file: String::new(),
                    kind: crate::volume::RvolKind::Field3,
                    role: EntryRole::Field,
                    state: Some(state),
                    modality: None,
                    arms: false,
                    window: None,
                    sha256: String::new(),
                },
                written,
            )?;
        }
        for &m in modalities {
            let src = if m.has_arms() { arm_labels.as_ref().expect("arms drawn") } else { &labels };
            let sim = simulate(src, table, &seeded_acquisition(cfg, m, seed, state))?;
            put(
                format!("{m}_{state}.rvol"),
                encode(&sim.volume)?,
                ManifestEntry {
                    file: String::new(),
                    kind: crate::volume::RvolKind::Scalar,
                    role: EntryRole::Image,
                    state: Some(state),
                    modality: Some(m),
                    arms: m.has_arms(),
                    window: Some([sim.window.lo, sim.window.hi]),
                    sha256: String::new(),
                },
                written,
            )?;
        }
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_validate() {
        let c = DatasetConfig::default();
        assert_eq!(c.n_models, 56);
        assert_eq!(c.modalities, Modality::ALL.to_vec());
        c.validate().unwrap();
    }

    #[test]
    fn derived_seeds_differ_by_stream() {
        assert_ne!(derive_seed(1, 1), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 1), derive_seed(2, 1));
        assert_eq!(derive_seed(5, 7), derive_seed(5, 7));
    }
}
