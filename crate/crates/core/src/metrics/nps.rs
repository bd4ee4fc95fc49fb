use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{freq_index, Fft2};
use crate::volume::{LabelMap, Volume};

/// Default in-plane patch edge, in pixels.
pub const DEFAULT_PATCH: usize = 32;

/// Radially averaged noise power spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialNps {
    /// Bin centers in cycles per mm, `k / (patch * dx)` for `k = 1..=patch/2`.
    pub bin_centers: Vec<f64>,
    /// Mean power per bin, in intensity² · mm².
    pub power: Vec<f64>,
    pub roi_voxels: usize,
    pub patches: usize,
}

impl RadialNps {
    pub fn validate(&self) -> Result<()> {
        if self.bin_centers.len() != self.power.len() {
            return Err(Error::BinMismatch);
        }
        if self.bin_centers.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("nps bins must increase".into()));
        }
        if self.power.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument("nps power must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "frequency_per_mm,power")?;
        for (f, p) in self.bin_centers.iter().zip(&self.power) {
            writeln!(w, "{f},{p}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_csv(&mut f).map_err(|e| Error::io(path, e))
    }
}

/// Top-left pixel of each patch, per slice, chosen greedily in raster order
/// so that patches lie fully inside the ROI and do not overlap.
pub(crate) fn place_patches(roi: &LabelMap, roi_id: u16, patch: usize) -> Vec<(usize, usize, usize)> {
    let [nx, ny, nz] = roi.dims();
    if patch == 0 || patch > nx || patch > ny {
        return Vec::new();
    }
    let per_slice: Vec<Vec<(usize, usize, usize)>> = (0..nz)
        .into_par_iter()
        .map(|k| {
            let s = roi.axial_slice(k);
            // integral image with a zero first row and column
            let w = nx + 1;
            let mut sat = vec![0u32; w * (ny + 1)];
            for j in 0..ny {
                let mut run = 0u32;
                for i in 0..nx {
                    run += (s[j * nx + i] == roi_id) as u32;
                    sat[(j + 1) * w + i + 1] = sat[j * w + i + 1] + run;
                }
            }
            let full = (patch * patch) as u32;
            let mut placed: Vec<(usize, usize, usize)> = Vec::new();
            for j in 0..=ny - patch {
                for i in 0..=nx - patch {
                    let inside = sat[(j + patch) * w + i + patch] + sat[j * w + i]
                        - sat[j * w + i + patch]
                        - sat[(j + patch) * w + i];
                    if inside != full {
                        continue;
                    }
                    let clash = placed
                        .iter()
                        .any(|&(pi, pj, _)| pi.abs_diff(i) < patch && pj.abs_diff(j) < patch);
                    if !clash {
                        placed.push((i, j, k));
                    }
                }
            }
            placed
        })
        .collect();
    per_slice.concat()
}

/// Subtract the least-squares plane `a + b x + c y` (centered coordinates).
fn detrend(p: &mut [f64], n: usize) {
    let c = (n as f64 - 1.0) / 2.0;
    let mut mean = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut xx = 0.0;
    for j in 0..n {
        for i in 0..n {
            let v = p[j * n + i];
            let (x, y) = (i as f64 - c, j as f64 - c);
            mean += v;
            sx += x * v;
            sy += y * v;
            xx += x * x;
        }
    }
    mean /= (n * n) as f64;
    // the centered grid is symmetric, so sum x^2 == sum y^2
    let (b, cy) = (sx / xx, sy / xx);
    for j in 0..n {
        for i in 0..n {
            p[j * n + i] -= mean + b * (i as f64 - c) + cy * (j as f64 - c);
        }
    }
}

/// Fraction of white-noise power that survives the plane fit at each frequency.
fn detrend_retention(n: usize, fft: &Fft2) -> Vec<f64> {
    let c = (n as f64 - 1.0) / 2.0;
    let xx: f64 = (0..n).map(|i| (i as f64 - c).powi(2)).sum::<f64>() * n as f64;
    let basis: [Box<dyn Fn(usize, usize) -> f64>; 3] = [
        Box::new(|_, _| 1.0 / n as f64),
        Box::new(move |i, _| (i as f64 - c) / xx.sqrt()),
        Box::new(move |_, j| (j as f64 - c) / xx.sqrt()),
    ];
    let n2 = (n * n) as f64;
    let mut kept = vec![1.0; n * n];
    for b in &basis {
        let mut buf: Vec<Complex64> = (0..n * n).map(|p| Complex64::new(b(p % n, p / n), 0.0)).collect();
        fft.forward(&mut buf);
        for (k, v) in kept.iter_mut().zip(&buf) {
            *k -= v.norm_sqr() / n2;
        }
    }
    kept
}

/// Radial NPS over non-overlapping `patch x patch` axial patches inside `roi == roi_id`.
///
/// Each patch is plane-detrended; its periodogram `dx dy / n^2 |F|^2` is
/// divided by the fraction of power the detrend leaves for white noise,
/// averaged over patches and binned by `round(f / df)` with `df = 1 / (n dx)`.
/// DC is excluded.
pub fn radial_nps(v: &Volume, roi: &LabelMap, roi_id: u16, patch: usize) -> Result<RadialNps> {
    v.geometry().ensure_same(roi.geometry(), "nps roi")?;
    if patch < 4 {
        return Err(Error::InvalidArgument(format!("nps patch must be >= 4, got {patch}")));
    }
    let origins = place_patches(roi, roi_id, patch);
    if origins.is_empty() {
        return Err(Error::RoiTooSmall { patch });
    }
    let [nx, ny, _] = v.dims();
    let sp = v.geometry().spacing;
    let n = patch;
    let fft = Fft2::new(n, n);
    let kept = detrend_retention(n, &fft);
    let data = v.data();
    let spectra: Vec<Vec<f64>> = origins
        .par_iter()
        .map(|&(i0, j0, k)| {
            let base = k * nx * ny;
            let mut p: Vec<f64> = (0..n * n)
                .map(|q| data[base + (j0 + q / n) * nx + i0 + q % n] as f64)
                .collect();
            detrend(&mut p, n);
            let mut buf: Vec<Complex64> = p.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            fft.forward(&mut buf);
            buf.iter().map(|c| c.norm_sqr()).collect()
        })
        .collect();
    // summed in patch order so the result does not depend on thread scheduling
    let mut sums = vec![0.0; n * n];
    for s in &spectra {
        for (a, b) in sums.iter_mut().zip(s) {
            *a += b;
        }
    }
    let scale = sp[0] * sp[1] / (n * n) as f64 / origins.len() as f64;
    let df = 1.0 / (n as f64 * sp[0]);
    let half = n / 2;
    let mut power = vec![0.0; half];
    let mut hits = vec![0usize; half];
    for q in 0..n * n {
        let fx = freq_index(q % n, n) / (n as f64 * sp[0]);
        let fy = freq_index(q / n, n) / (n as f64 * sp[1]);
        let bin = ((fx * fx + fy * fy).sqrt() / df).round() as usize;
        if bin == 0 || bin > half || kept[q] < 1e-6 {
            continue;
        }
        power[bin - 1] += sums[q] * scale / kept[q];
        hits[bin - 1] += 1;
    }
    let mut bin_centers = Vec::with_capacity(half);
    let mut out = Vec::with_capacity(half);
    for b in 0..half {
        if hits[b] > 0 {
            bin_centers.push((b + 1) as f64 * df);
            out.push(power[b] / hits[b] as f64);
        }
    }
    Ok(RadialNps {
        bin_centers,
        power: out,
        roi_voxels: origins.len() * n * n,
        patches: origins.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    #[test]
    fn detrend_removes_planes() {
        let n = 8;
        let mut p: Vec<f64> = (0..n * n).map(|q| 3.0 + 0.5 * (q % n) as f64 - 2.0 * (q / n) as f64).collect();
        detrend(&mut p, n);
        assert!(p.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn retention_is_zero_at_dc_and_sums_to_rank() {
        let n = 16;
        let kept = detrend_retention(n, &Fft2::new(n, n));
        assert!(kept[0].abs() < 1e-12);
        // Parseval: the three basis vectors remove exactly three units of power
        let removed: f64 = kept.iter().map(|k| 1.0 - k).sum();
        assert!((removed - 3.0).abs() < 1e-9);
        assert!(kept.iter().all(|&k| (-1e-12..=1.0 + 1e-12).contains(&k)));
    }

    #[test]
    fn placement_is_disjoint_and_inside() {
        let g = Geometry::centered([40, 30, 2], [1.0; 3]).unwrap();
        let roi = LabelMap::from_fn(g, |[i, j, _]| (i >= 3 && j >= 2 && i < 37) as u16 * 2).unwrap();
        let p = place_patches(&roi, 2, 16);
        // 34 wide x 28 tall fits 2 x 1 patches per slice
        assert_eq!(p.len(), 4);
        assert_eq!(p[0], (3, 2, 0));
        assert_eq!(p[1], (19, 2, 0));
    }

    #[test]
    fn constant_roi_has_no_power() {
        let g = Geometry::centered([64, 64, 2], [1.0; 3]).unwrap();
        let v = Volume::filled(g, 12.5).unwrap();
        let roi = LabelMap::filled(g, 1).unwrap();
        let nps = radial_nps(&v, &roi, 1, 32).unwrap();
        assert_eq!(nps.bin_centers.len(), 16);
        assert!(nps.power.iter().all(|&p| p < 1e-10));
    }
}
