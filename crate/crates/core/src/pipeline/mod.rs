//! Batch jobs behind the `synthreg` command line: dataset generation,
//! registration sweeps, image-quality evaluation and loss inspection.

mod dataset;
mod evaluate;
mod losses;
mod manifest;
mod sweep;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Geometry;

pub use dataset::{cmd_generate, model_dir, DatasetConfig, GenerateSummary};
pub use evaluate::{cmd_evaluate, evaluate_pair, EvaluateConfig, EvaluateSummary};
pub use losses::{cmd_losses, LossReport, LossesConfig};
pub use manifest::{EntryRole, Manifest, ManifestEntry, MANIFEST_FILE, MANIFEST_SCHEMA};
pub use sweep::{cmd_sweep, percentile, PairSpec, SweepConfig, SweepRow, SweepSummary, SweepSummaryRow};

/// Version tag written as the first line of every CSV the pipeline emits.
pub const CSV_SCHEMA: &str = "# synthreg-csv v1";

/// Output grid preset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    /// 128 x 128 x 64 at 2 mm.
    #[default]
    #[serde(rename = "desk")]
    Desk,
    /// 256 x 256 x 64 at 1 x 1 x 2 mm.
    #[serde(rename = "paper", alias = "full")]
    Full,
}

impl Resolution {
    pub fn geometry(self) -> Geometry {
        match self {
            Resolution::Desk => Geometry::desk(),
            Resolution::Full => Geometry::full(),
        }
    }
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Resolution::Desk),
            "paper" | "full" => Ok(Resolution::Full),
            _ => Err(Error::Config(format!("unknown resolution '{s}' (desk or paper)"))),
        }
    }
}

/// Respiratory state; exhale is the fixed reference for registration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum State {
    Exhale,
    Inhale,
}

impl State {
    pub const BOTH: [State; 2] = [State::Exhale, State::Inhale];

    pub fn name(self) -> &'static str {
        match self {
            State::Exhale => "exhale",
            State::Inhale => "inhale",
        }
    }

    pub fn phase(self) -> f64 {
        match self {
            State::Exhale => 0.0,
            State::Inhale => 1.0,
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Write `bytes` to `path` through a sibling temp file and a rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Build a worker pool; 0 means one worker per core.
pub(crate) fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Model indices with a manifest under `root`, ascending.
pub(crate) fn discover_models(root: &Path) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let e = e.map_err(|e| Error::io(root, e))?;
        let name = e.file_name().to_string_lossy().to_string();
        if let Some(idx) = name.strip_prefix("model_").and_then(|s| s.parse::<usize>().ok()) {
            if e.path().join(MANIFEST_FILE).is_file() {
                out.push(idx);
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}
