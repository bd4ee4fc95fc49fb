use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::Manifest;
use super::{model_dir, worker_pool, write_atomic, State, CSV_SCHEMA};
use crate::error::{Error, Result};
use crate::modality::{cbct_outside_mask, Modality};
use crate::phantom::organ;
use crate::registration::{
    close_mask, evaluate_registration, register_masked, RegistrationConfig, SimilarityMetric, DEFAULT_CLOSING_RADIUS_MM,
    SWEEP_SPACINGS,
};
use crate::volume::{read_rvol_file, LabelMap, Volume};

/// One registration pair: `moving` (inhale) onto CT (exhale).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub moving: Modality,
    pub metrics: Vec<SimilarityMetric>,
}

impl PairSpec {
    pub fn name(&self) -> String {
        format!("{}->ct", self.moving)
    }

    pub fn is_monomodal(&self) -> bool {
        self.moving == Modality::Ct
    }
}

fn default_pairs() -> Vec<PairSpec> {
    use SimilarityMetric::*;
    vec![
        PairSpec {
            moving: Modality::Ct,
            metrics: vec![Mmi, Nc, Ms],
        },
        PairSpec {
            moving: Modality::Cbct,
            metrics: vec![Mmi, Nc],
        },
        PairSpec {
            moving: Modality::Mri,
            metrics: vec![Mmi, Nc],
        },
    ]
}

fn default_spacings() -> Vec<f64> {
    SWEEP_SPACINGS.to_vec()
}

fn default_dataset() -> PathBuf {
    PathBuf::from("dataset")
}

/// Pre-smoothing stands in for the scanner blur that label-rendered phantoms lack;
/// without it MMI has almost no capture range on the hard organ edges.
pub const SWEEP_SMOOTHING_MM: f64 = 4.0;

fn default_registration() -> RegistrationConfig {
    RegistrationConfig {
        smoothing_sigma_mm: SWEEP_SMOOTHING_MM,
        ..Default::default()
    }
}

fn default_true() -> bool {
    true
}

fn default_closing() -> f64 {
    DEFAULT_CLOSING_RADIUS_MM
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default = "default_dataset")]
    pub dataset_dir: PathBuf,
    /// Results directory; `<dataset_dir>/sweep` when empty.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_pairs")]
    pub pairs: Vec<PairSpec>,
    #[serde(default = "default_spacings")]
    pub grid_spacings: Vec<f64>,
    /// Optimizer settings shared by every run; metric and spacing are replaced per setting.
    #[serde(default = "default_registration")]
    pub registration: RegistrationConfig,
    /// Restrict CBCT registrations to fixed voxels inside the CBCT field of view.
    #[serde(default = "default_true")]
    pub mask_fov: bool,
    #[serde(default = "default_closing")]
    pub closing_radius_mm: f64,
    /// Model indices to include; every model with a manifest when absent.
    #[serde(default)]
    pub models: Option<Vec<usize>>,
    #[serde(default)]
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl SweepConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let c: Self = crate::json::load_json(path)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.pairs {
            if p.metrics.is_empty() {
                return Err(Error::Config(format!("pair {} lists no metrics", p.name())));
            }
            if !p.is_monomodal() && p.metrics.iter().any(|m| m.monomodal_only()) {
                return Err(Error::Config(format!("MS cannot be used for the multimodal pair {}", p.name())));
            }
        }
        if self.grid_spacings.is_empty() || self.grid_spacings.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("grid_spacings must be a non-empty list of positive values".into()));
        }
        if !(self.closing_radius_mm >= 0.0) {
            return Err(Error::Config("closing_radius_mm must be >= 0".into()));
        }
        self.registration.validate()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| self.dataset_dir.join("sweep"))
    }

    /// Settings per model: sum over pairs of metrics x spacings.
    pub fn settings_per_model(&self) -> usize {
        self.pairs.iter().map(|p| p.metrics.len()).sum::<usize>() * self.grid_spacings.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: usize,
    pub pair: String,
    pub metric: SimilarityMetric,
    pub grid_spacing: f64,
    pub pre_dsc: f64,
    pub post_dsc: f64,
    pub iterations: usize,
    pub initial_metric: f64,
    pub final_metric: f64,
    pub converged: bool,
    pub diverged: bool,
    pub wall_time_s: f64,
    /// Empty on success.
    pub error: String,
}

impl SweepRow {
    pub fn failed(&self) -> bool {
        !self.error.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    pub pair: String,
    pub metric: SimilarityMetric,
    pub grid_spacing: f64,
    pub n: usize,
    pub mean_pre_dsc: f64,
    pub mean_post_dsc: f64,
    pub p10_post_dsc: f64,
    pub p90_post_dsc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummaryRow>,
}

impl SweepSummary {
    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.failed()).count()
    }
}

/// Linear-interpolated percentile (`q` in 0..=100) of unsorted data.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 100.0) / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

struct ModelData {
    fixed: Volume,
    fixed_mask: LabelMap,
    moving_mask: LabelMap,
    moving: BTreeMap<Modality, Volume>,
    fov: Option<LabelMap>,
}

fn load_model(dir: &Path, cfg: &SweepConfig, dataset: Option<&super::DatasetConfig>) -> Result<ModelData> {
    let pairs = &cfg.pairs;
    let closing = cfg.closing_radius_mm;
    let man = Manifest::load(dir)?;
    let image = |m: Modality, s: State| -> Result<Volume> {
        let e = man
            .image(m, s)
            .ok_or_else(|| Error::InvalidArgument(format!("{}: no {m} {s} image", dir.display())))?;
        read_rvol_file(dir.join(&e.file))
    };
    let labels = |s: State| -> Result<LabelMap> {
        let e = man
            .labels_for(Modality::Ct, s)
            .ok_or_else(|| Error::InvalidArgument(format!("{}: no {s} labels", dir.display())))?;
        read_rvol_file(dir.join(&e.file))
    };
    let mut moving = BTreeMap::new();
    for p in pairs {
        if !moving.contains_key(&p.moving) {
            moving.insert(p.moving, image(p.moving, State::Inhale)?);
        }
    }
    let inhale = labels(State::Inhale)?;
    let fov = match (cfg.mask_fov && moving.contains_key(&Modality::Cbct), dataset) {
        (true, Some(d)) => {
            let fov = d
                .acquisition(Modality::Cbct)
                .fov_mask
                .ok_or_else(|| Error::Config("CBCT acquisition without a field of view".into()))?;
            let outside = cbct_outside_mask(&inhale, &fov)?;
            Some(LabelMap::from_vec(*inhale.geometry(), outside.iter().map(|&o| u16::from(!o)).collect())?)
        }
        _ => None,
    };
    Ok(ModelData {
        fixed: image(Modality::Ct, State::Exhale)?,
        fixed_mask: close_mask(&labels(State::Exhale)?.select(organ::LIVER), closing)?,
        moving_mask: close_mask(&inhale.select(organ::LIVER), closing)?,
        moving,
        fov,
    })
}

fn run_setting(data: &ModelData, pair: &PairSpec, cfg: &RegistrationConfig) -> Result<(crate::registration::RegistrationResult, f64, f64)> {
    let moving = &data.moving[&pair.moving];
    let mask = if pair.moving == Modality::Cbct { data.fov.as_ref() } else { None };
    let r = register_masked(&data.fixed, moving, mask, cfg)?;
    let d = evaluate_registration(&r.transform, &data.moving_mask, &data.fixed_mask)?;
    Ok((r, d.pre, d.post))
}

/// Run every (model, pair, metric, spacing) registration and write
/// `sweep.csv` and `summary.csv`. Failed settings become flagged rows.
pub fn cmd_sweep(cfg: &SweepConfig) -> Result<SweepSummary> {
    cfg.validate()?;
    let models = match &cfg.models {
        Some(m) => m.clone(),
        None => super::discover_models(&cfg.dataset_dir)?,
    };
    if models.is_empty() {
        return Err(Error::Config(format!("no models found under {}", cfg.dataset_dir.display())));
    }
    let mut jobs: Vec<(usize, usize, SimilarityMetric, f64)> = Vec::new();
    for &m in &models {
        for (pi, p) in cfg.pairs.iter().enumerate() {
            for &metric in &p.metrics {
                for &s in &cfg.grid_spacings {
                    jobs.push((m, pi, metric, s));
                }
            }
        }
    }
    let dataset: Option<super::DatasetConfig> = if cfg.mask_fov {
        Some(crate::json::load_json(cfg.dataset_dir.join("dataset.json"))?)
    } else {
        None
    };
    let pool = worker_pool(cfg.workers)?;
    let mut rows: Vec<SweepRow> = pool.install(|| {
        models
            .par_iter()
            .flat_map_iter(|&m| {
                let data = load_model(&model_dir(&cfg.dataset_dir, m), cfg, dataset.as_ref());
                let mine: Vec<_> = jobs.iter().filter(|j| j.0 == m).cloned().collect();
                let mut out = Vec::with_capacity(mine.len());
                for (_, pi, metric, spacing) in mine {
                    let pair = &cfg.pairs[pi];
                    let mut rc = cfg.registration.clone();
                    rc.metric = metric;
                    rc.grid_spacing = spacing;
                    let res = data.as_ref().map_err(|e| Error::InvalidArgument(e.to_string())).and_then(|d| run_setting(d, pair, &rc));
                    let row = match res {
                        Ok((r, pre, post)) => SweepRow {
                            model: m,
                            pair: pair.name(),
                            metric,
                            grid_spacing: spacing,
                            pre_dsc: pre,
                            post_dsc: post,
                            iterations: r.iterations(),
                            initial_metric: r.initial_metric,
                            final_metric: r.final_metric,
                            converged: r.converged,
                            diverged: r.diverged,
                            wall_time_s: r.wall_time_s,
                            error: String::new(),
                        },
                        Err(e) => {
                            log::warn!("model {m} {} {metric} {spacing}: {e}", pair.name());
                            SweepRow {
                                model: m,
                                pair: pair.name(),
                                metric,
                                grid_spacing: spacing,
                                pre_dsc: f64::NAN,
                                post_dsc: f64::NAN,
                                iterations: 0,
                                initial_metric: f64::NAN,
                                final_metric: f64::NAN,
                                converged: false,
                                diverged: false,
                                wall_time_s: 0.0,
                                error: e.to_string(),
                            }
                        }
                    };
                    log::info!(
                        "model {m} {} {metric} {spacing} mm: dsc {:.3} -> {:.3}",
                        row.pair,
                        row.pre_dsc,
                        row.post_dsc
                    );
                    out.push(row);
                }
                out
            })
            .collect()
    });
    rows.sort_by(|a, b| {
        (a.model, &a.pair, a.metric)
            .cmp(&(b.model, &b.pair, b.metric))
            .then(a.grid_spacing.total_cmp(&b.grid_spacing))
    });
    let summary = summarize(&rows);
    let out = cfg.output_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_atomic(&out.join("sweep.csv"), rows_csv(&rows).as_bytes())?;
    write_atomic(&out.join("summary.csv"), summary_csv(&summary).as_bytes())?;
    Ok(SweepSummary { rows, summary })
}

fn summarize(rows: &[SweepRow]) -> Vec<SweepSummaryRow> {
    let mut groups: BTreeMap<(String, SimilarityMetric, u64), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| !r.failed()) {
        groups
            .entry((r.pair.clone(), r.metric, r.grid_spacing.to_bits()))
            .or_default()
            .push(r);
    }
    let mut out: Vec<SweepSummaryRow> = groups
        .into_iter()
        .map(|((pair, metric, bits), rs)| {
            let pre: Vec<f64> = rs.iter().map(|r| r.pre_dsc).collect();
            let post: Vec<f64> = rs.iter().map(|r| r.post_dsc).collect();
            SweepSummaryRow {
                pair,
                metric,
                grid_spacing: f64::from_bits(bits),
                n: rs.len(),
                mean_pre_dsc: super::mean_std(&pre).0,
                mean_post_dsc: super::mean_std(&post).0,
                p10_post_dsc: percentile(&post, 10.0),
                p90_post_dsc: percentile(&post, 90.0),
            }
        })
        .collect();
    out.sort_by(|a, b| (&a.pair, a.metric).cmp(&(&b.pair, b.metric)).then(a.grid_spacing.total_cmp(&b.grid_spacing)));
    out
}

fn rows_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{CSV_SCHEMA}\n");
    s.push_str("model,pair,metric,grid_spacing_mm,pre_dsc,post_dsc,iterations,initial_metric,final_metric,converged,diverged,wall_time_s,status,error\n");
    for r in rows {
        let status = if r.failed() { "failed" } else { "ok" };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{:.3},{},\"{}\"",
            r.model,
            r.pair,
            r.metric,
            r.grid_spacing,
            r.pre_dsc,
            r.post_dsc,
            r.iterations,
            r.initial_metric,
            r.final_metric,
            r.converged,
            r.diverged,
            r.wall_time_s,
            status,
            r.error.replace('"', "'")
        );
    }
    s
}

fn summary_csv(rows: &[SweepSummaryRow]) -> String {
    let mut s = format!("{CSV_SCHEMA}\n");
    s.push_str("pair,metric,grid_spacing_mm,n,mean_pre_dsc,mean_post_dsc,p10_post_dsc,p90_post_dsc\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.pair, r.metric, r.grid_spacing, r.n, r.mean_pre_dsc, r.mean_post_dsc, r.p10_post_dsc, r.p90_post_dsc
        );
    }
    s
}
