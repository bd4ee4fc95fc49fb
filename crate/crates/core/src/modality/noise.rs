//! Additive noise with a prescribed radial power spectrum.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{freq_index, Fft2};
use crate::volume::{LabelMap, Volume};

/// Target noise level and texture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation inside the ROI, in the intensity units of the image it is added to.
    pub magnitude: f64,
    /// `(frequency mm^-1, power)` knots, linearly interpolated and held flat
    /// beyond the ends. Empty means white noise.
    #[serde(default)]
    pub radial_profile: Vec<(f64, f64)>,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec {
            magnitude: 0.0,
            radial_profile: Vec::new(),
        }
    }

    pub fn white(magnitude: f64) -> Self {
        NoiseSpec {
            magnitude,
            radial_profile: Vec::new(),
        }
    }

    /// Band-pass texture `u * exp(1 - u)`, `u = f / peak`, tabulated up to 1 mm^-1.
    pub fn textured(magnitude: f64, peak: f64) -> Self {
        let radial_profile = (0..=40)
            .map(|i| {
                let f = i as f64 * 0.025;
                let u = f / peak;
                (f, u * (1.0 - u).exp())
            })
            .collect();
        NoiseSpec {
            magnitude,
            radial_profile,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.magnitude >= 0.0 && self.magnitude.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise magnitude must be >= 0, got {}", self.magnitude)));
        }
        if self.radial_profile.iter().any(|&(f, p)| !(f >= 0.0) || !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument("noise profile must be non-negative".into()));
        }
        if self.radial_profile.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidArgument("noise profile frequencies must increase".into()));
        }
        Ok(())
    }

    /// Target power at radial frequency `f`.
    pub fn power_at(&self, f: f64) -> f64 {
        let p = &self.radial_profile;
        match p.len() {
            0 => 1.0,
            1 => p[0].1,
            _ => {
                if f <= p[0].0 {
                    return p[0].1;
                }
                let last = p[p.len() - 1];
                if f >= last.0 {
                    return last.1;
                }
                let i = p.partition_point(|&(x, _)| x <= f);
                let (f0, p0) = p[i - 1];
                let (f1, p1) = p[i];
                p0 + (p1 - p0) * (f - f0) / (f1 - f0)
            }
        }
    }
}

/// Unscaled noise field shaped per axial slice.
///
/// Slices draw from independent streams derived from `seed`.
pub(crate) fn shaped_noise(v: &Volume, spec: &NoiseSpec, seed: u64) -> Vec<f64> {
    let g = v.geometry();
    let [nx, ny, nz] = g.dims;
    let fft = Fft2::new(nx, ny);
    let filter: Vec<f64> = (0..nx * ny)
        .map(|idx| {
            let (i, j) = (idx % nx, idx / nx);
            let fx = freq_index(i, nx) / (nx as f64 * g.spacing[0]);
            let fy = freq_index(j, ny) / (ny as f64 * g.spacing[1]);
            spec.power_at((fx * fx + fy * fy).sqrt()).sqrt()
        })
        .collect();
    let slices: Vec<Vec<f64>> = (0..nz)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut buf: Vec<Complex64> = (0..nx * ny)
                .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
                .collect();
            fft.forward(&mut buf);
            for (c, &h) in buf.iter_mut().zip(&filter) {
                *c *= h;
            }
            fft.inverse(&mut buf);
            buf.into_iter().map(|c| c.re).collect()
        })
        .collect();
    slices.concat()
}

/// Add spectrally shaped noise whose standard deviation over `roi == roi_id`
/// equals `spec.magnitude` (whole volume when the ROI is empty).
pub fn add_textured_noise(v: &Volume, roi: &LabelMap, roi_id: u16, spec: &NoiseSpec, seed: u64) -> Result<Volume> {
    spec.validate()?;
    v.geometry().ensure_same(roi.geometry(), "noise roi")?;
    if spec.magnitude == 0.0 {
        return Ok(v.clone());
    }
    let noise = shaped_noise(v, spec, seed);
    let labels = roi.data();
    let mut in_roi: Vec<usize> = (0..noise.len()).filter(|&i| labels[i] == roi_id).collect();
    if in_roi.is_empty() {
        in_roi = (0..noise.len()).collect();
    }
    let n = in_roi.len() as f64;
    let mean = in_roi.iter().map(|&i| noise[i]).sum::<f64>() / n;
    let var = in_roi.iter().map(|&i| (noise[i] - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::InvalidArgument("noise profile has no power on this grid".into()));
    }
    let scale = spec.magnitude / var.sqrt();
    let data = v
        .data()
        .iter()
        .zip(&noise)
        .map(|(&x, &e)| (x as f64 + (e - mean) * scale) as f32)
        .collect();
    Volume::from_vec(*v.geometry(), data)
}
