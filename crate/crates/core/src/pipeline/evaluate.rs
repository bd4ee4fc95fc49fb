use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::seeded_acquisition;
use super::manifest::Manifest;
use super::{mean_std, model_dir, write_atomic, State, CSV_SCHEMA};
use crate::error::{Error, Result};
use crate::metrics::{
    edge_ratios, fsim, hist_cc, mae, ncc, noise_magnitude, radial_nps, ssim, Histogram, MetricReport, RadialNps,
    HISTOGRAM_BINS,
};
use crate::modality::{simulate, AcquisitionSpec, Modality, NoiseSpec};
use crate::phantom::organ;
use crate::volume::{read_rvol_file, LabelMap, ResolvedWindow, Volume};

fn default_dataset() -> PathBuf {
    PathBuf::from("dataset")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluateConfig {
    #[serde(default = "default_dataset")]
    pub dataset_dir: PathBuf,
    /// Results directory; `<dataset_dir>/evaluation` when absent.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Second dataset whose pooled spectra and histograms serve as the
    /// reference for NCC and HistCC.
    #[serde(default)]
    pub reference_dir: Option<PathBuf>,
    /// NPS patch edge in pixels; 32 mm worth of pixels when absent.
    #[serde(default)]
    pub nps_patch: Option<usize>,
}

impl EvaluateConfig {
    pub fn new(dataset_dir: impl Into<PathBuf>) -> Self {
        EvaluateConfig {
            dataset_dir: dataset_dir.into(),
            output_dir: None,
            reference_dir: None,
            nps_patch: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::json::load_json(path)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| self.dataset_dir.join("evaluation"))
    }
}

/// One-to-one metrics of a synthetic image against its reference.
///
/// Both images are windowed to [-1, 1]; MAE and NM are reported in native
/// units via `window`. MAE excludes background (label 0) voxels and NM is
/// taken over the liver.
pub fn evaluate_pair(
    synthetic: &Volume,
    reference: &Volume,
    labels: &LabelMap,
    window: &ResolvedWindow,
) -> Result<BTreeMap<String, f64>> {
    let npu = window.native_per_unit();
    let mut m = BTreeMap::new();
    m.insert("mae".to_string(), mae(synthetic, reference, labels)? * npu);
    m.insert("ssim".to_string(), ssim(synthetic, reference)?);
    m.insert("fsim".to_string(), fsim(synthetic, reference)?);
    let (epr, egr) = edge_ratios(reference, synthetic)?;
    m.insert("epr".to_string(), epr);
    m.insert("egr".to_string(), egr);
    m.insert("nm".to_string(), noise_magnitude(synthetic, labels, organ::LIVER)? * npu);
    Ok(m)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluateSummary {
    pub report: MetricReport,
    pub skipped: Vec<String>,
    /// Per modality: metric name -> (mean, std, n).
    pub aggregate: BTreeMap<Modality, BTreeMap<String, (f64, f64, usize)>>,
}

struct Pooled {
    hist: Option<Histogram>,
    nps: Vec<RadialNps>,
}

fn nps_patch(cfg: &EvaluateConfig, spacing: f64) -> usize {
    cfg.nps_patch.unwrap_or_else(|| ((32.0 / spacing).round() as usize).max(4))
}

fn native_window(w: [f64; 2]) -> Result<ResolvedWindow> {
    ResolvedWindow::new(w[0], w[1])
}

fn mean_nps(list: &[RadialNps]) -> Option<RadialNps> {
    let first = list.first()?;
    if list.iter().any(|n| n.bin_centers != first.bin_centers) {
        return None;
    }
    let k = list.len() as f64;
    let power = (0..first.power.len())
        .map(|b| list.iter().map(|n| n.power[b]).sum::<f64>() / k)
        .collect();
    Some(RadialNps {
        bin_centers: first.bin_centers.clone(),
        power,
        roi_voxels: list.iter().map(|n| n.roi_voxels).sum(),
        patches: list.iter().map(|n| n.patches).sum(),
    })
}

fn add_hist(acc: &mut Option<Histogram>, h: Histogram) {
    match acc {
        Some(a) => {
            for (x, y) in a.counts.iter_mut().zip(&h.counts) {
                *x += y;
            }
        }
        None => *acc = Some(h),
    }
}

/// Pooled histograms and spectra of every image in a dataset, per modality.
fn pool_dataset(root: &Path, cfg: &EvaluateConfig) -> Result<BTreeMap<Modality, Pooled>> {
    let mut pooled: BTreeMap<Modality, Pooled> = BTreeMap::new();
    for idx in super::discover_models(root)? {
        let dir = model_dir(root, idx);
        let man = Manifest::load(&dir)?;
        for m in man.modalities() {
            for s in State::BOTH {
                let (Some(e), Some(l)) = (man.image(m, s), man.labels_for(m, s)) else { continue };
                let v: Volume = read_rvol_file(dir.join(&e.file))?;
                let labels: LabelMap = read_rvol_file(dir.join(&l.file))?;
                let p = pooled.entry(m).or_insert(Pooled { hist: None, nps: Vec::new() });
                add_hist(&mut p.hist, Histogram::uniform(&v, -1.0, 1.0, HISTOGRAM_BINS)?);
                if let Ok(n) = radial_nps(&v, &labels, organ::LIVER, nps_patch(cfg, v.geometry().spacing[0])) {
                    p.nps.push(n);
                }
            }
        }
    }
    Ok(pooled)
}

/// Compare every image of a dataset against its noiseless phantom image,
/// and optionally against a reference dataset's distributions.
///
/// Writes `metrics.json`, `metrics.csv`, `summary.csv`, and per-modality
/// `histogram_<modality>.csv` and `nps_<modality>.csv`.
pub fn cmd_evaluate(cfg: &EvaluateConfig) -> Result<EvaluateSummary> {
    let root = &cfg.dataset_dir;
    let dataset: super::DatasetConfig = crate::json::load_json(root.join("dataset.json"))?;
    let table = dataset.tissue()?;
    let reference = match &cfg.reference_dir {
        Some(r) => Some(pool_dataset(r, cfg)?),
        None => None,
    };
    let mut summary = EvaluateSummary::default();
    let mut pooled: BTreeMap<Modality, Pooled> = BTreeMap::new();
    let models = super::discover_models(root)?;
    if models.is_empty() {
        return Err(Error::Config(format!("no models found under {}", root.display())));
    }
    for idx in models {
        let dir = model_dir(root, idx);
        let man = match Manifest::load(&dir) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("{}: {e}", dir.display());
                summary.skipped.push(dir.display().to_string());
                continue;
            }
        };
        for m in man.modalities() {
            for s in State::BOTH {
                let name = format!("model_{idx:03}/{m}_{s}");
                let outcome = (|| -> Result<(BTreeMap<String, f64>, Histogram, Option<RadialNps>)> {
                    let e = man.image(m, s).ok_or_else(|| Error::InvalidArgument("image missing from manifest".into()))?;
                    let l = man.labels_for(m, s).ok_or_else(|| Error::InvalidArgument("labels missing".into()))?;
                    let synthetic: Volume = read_rvol_file(dir.join(&e.file))?;
                    let labels: LabelMap = read_rvol_file(dir.join(&l.file))?;
                    let window = native_window(e.window.ok_or_else(|| Error::InvalidArgument("image without window".into()))?)?;
                    // same jitter stream as the stored image, so only the noise differs
                    let mut acq: AcquisitionSpec = seeded_acquisition(&dataset, m, man.seed, s);
                    acq.noise = NoiseSpec::none();
                    let reference = simulate(&labels, &table, &acq)?.volume;
                    let metrics = evaluate_pair(&synthetic, &reference, &labels, &window)?;
                    let hist = Histogram::uniform(&synthetic, -1.0, 1.0, HISTOGRAM_BINS)?;
                    let nps = match radial_nps(&synthetic, &labels, organ::LIVER, nps_patch(cfg, synthetic.geometry().spacing[0])) {
                        Ok(n) => Some(n),
                        Err(e) => {
                            log::warn!("{name}: no NPS ({e})");
                            None
                        }
                    };
                    Ok((metrics, hist, nps))
                })();
                let (metrics, hist, nps) = match outcome {
                    Ok(x) => x,
                    Err(e) => {
                        log::warn!("{name}: skipped ({e})");
                        summary.skipped.push(name);
                        continue;
                    }
                };
                for (k, v) in &metrics {
                    summary.report.insert(&name, k, *v)?;
                }
                if let Some(refp) = reference.as_ref().and_then(|r| r.get(&m)) {
                    if let Some(h) = &refp.hist {
                        if let Ok(c) = hist_cc(&hist, h) {
                            summary.report.insert(&name, "histcc", c)?;
                        }
                    }
                    if let (Some(n), Some(rn)) = (&nps, mean_nps(&refp.nps)) {
                        if let Ok(c) = ncc(n, &rn) {
                            summary.report.insert(&name, "ncc", c)?;
                        }
                    }
                }
                let p = pooled.entry(m).or_insert(Pooled { hist: None, nps: Vec::new() });
                add_hist(&mut p.hist, hist);
                p.nps.extend(nps);
            }
        }
    }
    let out = cfg.output_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut json = summary.report.to_json()?;
    json.push('\n');
    write_atomic(&out.join("metrics.json"), json.as_bytes())?;
    let mut csv = Vec::new();
    summary.report.write_csv(&mut csv).map_err(|e| Error::io(&out, e))?;
    let mut flat = format!("{CSV_SCHEMA}\n").into_bytes();
    flat.extend(csv);
    write_atomic(&out.join("metrics.csv"), &flat)?;

    let mut table_csv = format!("{CSV_SCHEMA}\nmodality,metric,mean,std,n\n");
    let mut values: BTreeMap<(Modality, String), Vec<f64>> = BTreeMap::new();
    for (vol, metrics) in &summary.report.volumes {
        let Some(modality) = Modality::ALL.into_iter().find(|m| vol.contains(&format!("/{m}_"))) else { continue };
        for (k, v) in metrics {
            values.entry((modality, k.clone())).or_default().push(*v);
        }
    }
    for ((m, k), vals) in values {
        let (mean, std) = mean_std(&vals);
        let _ = writeln!(table_csv, "{m},{k},{mean},{std},{}", vals.len());
        summary.aggregate.entry(m).or_default().insert(k, (mean, std, vals.len()));
    }
    write_atomic(&out.join("summary.csv"), table_csv.as_bytes())?;
    for (m, p) in &pooled {
        if let Some(h) = &p.hist {
            h.save_csv(out.join(format!("histogram_{m}.csv")))?;
        }
        if let Some(n) = mean_nps(&p.nps) {
            n.save_csv(out.join(format!("nps_{m}.csv")))?;
        }
    }
    Ok(summary)
}
