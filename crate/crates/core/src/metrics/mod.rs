//! Image quality metrics: one-to-one comparisons against a reference volume
//! and distributional comparisons (noise spectra, histograms), plus Dice.

mod edges;
mod filter;
mod fsim;
mod nps;
mod ssim;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{LabelMap, Volume};

pub use edges::{canny_edges, edge_ratios, edge_ratios_from_maps};
pub use fsim::{fsim, fsim_with_range};
pub use nps::{radial_nps, RadialNps, DEFAULT_PATCH};
pub use ssim::{ssim, ssim_with_range};

/// Mean absolute difference over voxels where `mask` is nonzero.
pub fn mae(a: &Volume, b: &Volume, mask: &LabelMap) -> Result<f64> {
    a.geometry().ensure_same(b.geometry(), "mae")?;
    a.geometry().ensure_same(mask.geometry(), "mae mask")?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((&x, &y), &m) in a.data().iter().zip(b.data()).zip(mask.data()) {
        if m != 0 {
            sum += (x as f64 - y as f64).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / n as f64)
}

fn roi_values(v: &Volume, roi: &LabelMap, roi_id: u16) -> Result<Vec<f64>> {
    v.geometry().ensure_same(roi.geometry(), "roi")?;
    let vals: Vec<f64> = v
        .data()
        .iter()
        .zip(roi.data())
        .filter(|(_, &l)| l == roi_id)
        .map(|(&x, _)| x as f64)
        .collect();
    if vals.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(vals)
}

/// Population standard deviation over `roi == roi_id`.
pub fn noise_magnitude(v: &Volume, roi: &LabelMap, roi_id: u16) -> Result<f64> {
    let vals = roi_values(v, roi, roi_id)?;
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    Ok((vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt())
}

/// Mean absolute deviation from the ROI mean over `roi == roi_id`.
pub fn mean_absolute_deviation(v: &Volume, roi: &LabelMap, roi_id: u16) -> Result<f64> {
    let vals = roi_values(v, roi, roi_id)?;
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    Ok(vals.iter().map(|x| (x - mean).abs()).sum::<f64>() / n)
}

/// Dice overlap of the nonzero voxels of two masks; 1 when both are empty.
pub fn dice(m1: &LabelMap, m2: &LabelMap) -> Result<f64> {
    m1.geometry().ensure_same(m2.geometry(), "dice")?;
    let (mut a, mut b, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in m1.data().iter().zip(m2.data()) {
        let (x, y) = (x != 0, y != 0);
        a += x as usize;
        b += y as usize;
        both += (x && y) as usize;
    }
    if a + b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (a + b) as f64)
}

/// Pearson correlation of two equally long vectors.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::ShapeMismatch(format!("pearson on {} vs {} values", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation of two radial noise power spectra on the same bins.
pub fn ncc(p: &RadialNps, q: &RadialNps) -> Result<f64> {
    if p.bin_centers.len() != q.bin_centers.len()
        || p.bin_centers.iter().zip(&q.bin_centers).any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0))
    {
        return Err(Error::BinMismatch);
    }
    pearson(&p.power, &q.power)
}

/// Intensity histogram with uniform bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub excluded_background: bool,
}

/// Bin count used for intensity histograms.
pub const HISTOGRAM_BINS: usize = 256;

impl Histogram {
    /// Histogram of every voxel over `[lo, hi]`; values outside land in the end bins.
    pub fn uniform(v: &Volume, lo: f64, hi: f64, bins: usize) -> Result<Self> {
        Self::build(v.data().iter().map(|&x| x as f64), lo, hi, bins, false)
    }

    /// Histogram restricted to voxels whose label is nonzero.
    pub fn foreground(v: &Volume, labels: &LabelMap, lo: f64, hi: f64, bins: usize) -> Result<Self> {
        v.geometry().ensure_same(labels.geometry(), "histogram mask")?;
        let it = v
            .data()
            .iter()
            .zip(labels.data())
            .filter(|(_, &l)| l != 0)
            .map(|(&x, _)| x as f64);
        Self::build(it, lo, hi, bins, true)
    }

    fn build(values: impl Iterator<Item = f64>, lo: f64, hi: f64, bins: usize, excluded: bool) -> Result<Self> {
        if bins == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("histogram needs bins >= 1 and lo < hi, got {bins} [{lo}, {hi}]")));
        }
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|b| lo + b as f64 * width).collect();
        let mut counts = vec![0u64; bins];
        for x in values {
            let b = ((x - lo) / width).floor();
            let b = if b.is_nan() { 0 } else { b.clamp(0.0, (bins - 1) as f64) as usize };
            counts[b] += 1;
        }
        Ok(Histogram {
            edges,
            counts,
            excluded_background: excluded,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts divided by total count and bin width.
    pub fn densities(&self) -> Vec<f64> {
        let total = self.total().max(1) as f64;
        self.counts
            .iter()
            .zip(self.edges.windows(2))
            .map(|(&c, e)| c as f64 / (total * (e[1] - e[0])))
            .collect()
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "lower,upper,count,density")?;
        for ((c, e), d) in self.counts.iter().zip(self.edges.windows(2)).zip(self.densities()) {
            writeln!(w, "{},{},{c},{d}", e[0], e[1])?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_csv(&mut f).map_err(|e| Error::io(path, e))
    }
}

/// Correlation of two histogram densities on identical edges.
pub fn hist_cc(h1: &Histogram, h2: &Histogram) -> Result<f64> {
    if h1.edges != h2.edges {
        return Err(Error::EdgeMismatch);
    }
    pearson(&h1.densities(), &h2.densities())
}

/// Metric values keyed by volume name, then metric name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub volumes: BTreeMap<String, BTreeMap<String, f64>>,
}

fn metric_range(name: &str) -> Option<(f64, f64)> {
    match name {
        "ssim" | "fsim" | "epr" | "dice" | "dice_pre" | "dice_post" => Some((0.0, 1.0)),
        "ncc" | "histcc" => Some((-1.0, 1.0)),
        "mae" | "nm" | "egr" => Some((0.0, f64::INFINITY)),
        _ => None,
    }
}

impl MetricReport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record one value; rejects non-finite values and values outside a known metric's range.
    ///
    /// SSIM can go negative for anticorrelated images, so it is only checked from above.
    pub fn insert(&mut self, volume: &str, metric: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!("{volume}/{metric} is not finite")));
        }
        if let Some((lo, hi)) = metric_range(metric) {
            let lo = if metric == "ssim" { -1.0 } else { lo };
            if value < lo - 1e-9 || value > hi + 1e-9 {
                return Err(Error::InvalidArgument(format!("{volume}/{metric} = {value} outside [{lo}, {hi}]")));
            }
        }
        self.volumes
            .entry(volume.to_string())
            .or_default()
            .insert(metric.to_string(), value);
        Ok(())
    }

    pub fn get(&self, volume: &str, metric: &str) -> Option<f64> {
        self.volumes.get(volume)?.get(metric).copied()
    }

    /// One `volume,metric,value` row per entry, sorted by volume then metric.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "volume,metric,value")?;
        for (vol, m) in &self.volumes {
            for (name, value) in m {
                writeln!(w, "{vol},{name},{value}")?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    #[test]
    fn dice_closed_forms() {
        let g = Geometry::centered([10, 10, 2], [1.0; 3]).unwrap();
        let a = LabelMap::from_fn(g, |[i, _, k]| (k == 0 && i < 10) as u16).unwrap();
        let b = LabelMap::from_fn(g, |[i, _, _]| (i < 5) as u16).unwrap();
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(a.count_nonzero(), 100);
        assert_eq!(b.count_nonzero(), 100);
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
        let empty = LabelMap::filled(g, 0).unwrap();
        assert_eq!(dice(&empty, &empty).unwrap(), 1.0);
        assert_eq!(dice(&a, &empty).unwrap(), 0.0);
    }

    #[test]
    fn pearson_errors_and_bounds() {
        assert!(matches!(pearson(&[1.0, 1.0], &[0.0, 2.0]), Err(Error::ZeroVariance)));
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn histogram_clamps_into_end_bins() {
        let g = Geometry::centered([4, 1, 1], [1.0; 3]).unwrap();
        let v = Volume::from_vec(g, vec![-5.0, 0.0, 0.99, 7.0]).unwrap();
        let h = Histogram::uniform(&v, 0.0, 1.0, 4).unwrap();
        assert_eq!(h.counts, vec![2, 0, 0, 2]);
        assert_eq!(h.edges, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn report_rejects_out_of_range() {
        let mut r = MetricReport::new();
        r.insert("ct_0", "dice", 0.9).unwrap();
        assert!(r.insert("ct_0", "dice", 1.2).is_err());
        assert!(r.insert("ct_0", "mae", f64::NAN).is_err());
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "volume,metric,value\nct_0,dice,0.9\n");
    }
}
