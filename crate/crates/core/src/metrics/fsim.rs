//! Feature similarity from phase congruency and gradient magnitude.
//!
//! Phase congruency follows Kovesi's log-Gabor construction with the
//! parameter set customary for FSIM (4 scales, 4 orientations). Slices are
//! rescaled so the declared dynamic range spans 255 levels, which keeps
//! the stabilizing constants at their 8-bit values.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::filter::slice_f64;
use crate::error::Result;
use crate::spectral::Fft2;
use crate::volume::Volume;

const N_SCALE: usize = 4;
const N_ORIENT: usize = 4;
const MIN_WAVELENGTH: f64 = 6.0;
const MULT: f64 = 2.0;
const SIGMA_ON_F: f64 = 0.55;
const D_THETA_ON_SIGMA: f64 = 1.2;
const NOISE_K: f64 = 2.0;
const EPS: f64 = 1e-4;
const LOWPASS_CUTOFF: f64 = 0.45;
const LOWPASS_ORDER: i32 = 15;
// Empirical correction of the noise threshold for the energy-based measure.
const NOISE_RESCALE: f64 = 1.7;

const T1: f64 = 0.85;
const T2: f64 = 160.0;

/// FSIM for data normalized to [-1, 1].
pub fn fsim(a: &Volume, b: &Volume) -> Result<f64> {
    fsim_with_range(a, b, 2.0)
}

/// Axial-slice FSIM averaged over slices.
pub fn fsim_with_range(a: &Volume, b: &Volume, dynamic_range: f64) -> Result<f64> {
    a.geometry().ensure_same(b.geometry(), "fsim")?;
    let [nx, ny, nz] = a.dims();
    let plane = nx * ny;
    let bank = FilterBank::new(nx, ny);
    let to_255 = 255.0 / dynamic_range;
    let per_slice: Vec<f64> = (0..nz)
        .into_par_iter()
        .map(|k| {
            let x: Vec<f64> = slice_f64(a.data(), k, plane).into_iter().map(|v| v * to_255).collect();
            let y: Vec<f64> = slice_f64(b.data(), k, plane).into_iter().map(|v| v * to_255).collect();
            slice_fsim(&bank, &x, &y)
        })
        .collect();
    Ok(per_slice.iter().sum::<f64>() / nz as f64)
}

fn slice_fsim(bank: &FilterBank, x: &[f64], y: &[f64]) -> f64 {
    let pc1 = bank.phase_congruency(x);
    let pc2 = bank.phase_congruency(y);
    let g1 = scharr_magnitude(x, bank.nx, bank.ny);
    let g2 = scharr_magnitude(y, bank.nx, bank.ny);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut sg_sum = 0.0;
    for p in 0..x.len() {
        let s_pc = (2.0 * pc1[p] * pc2[p] + T1) / (pc1[p] * pc1[p] + pc2[p] * pc2[p] + T1);
        let s_g = (2.0 * g1[p] * g2[p] + T2) / (g1[p] * g1[p] + g2[p] * g2[p] + T2);
        let pcm = pc1[p].max(pc2[p]);
        num += s_g * s_pc * pcm;
        den += pcm;
        sg_sum += s_g;
    }
    if den > 0.0 {
        num / den
    } else {
        // featureless slice pair: only the gradient term is defined
        sg_sum / x.len() as f64
    }
}

/// Scharr gradient magnitude (kernels scaled by 1/16), zero padding.
pub(crate) fn scharr_magnitude(img: &[f64], nx: usize, ny: usize) -> Vec<f64> {
    let at = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
            0.0
        } else {
            img[j as usize * nx + i as usize]
        }
    };
    let w = [3.0, 10.0, 3.0];
    let mut out = vec![0.0; nx * ny];
    for j in 0..ny as isize {
        for i in 0..nx as isize {
            let mut gx = 0.0;
            let mut gy = 0.0;
            for t in -1..=1isize {
                let wt = w[(t + 1) as usize];
                gx += wt * (at(i + 1, j + t) - at(i - 1, j + t));
                gy += wt * (at(i + t, j + 1) - at(i + t, j - 1));
            }
            out[j as usize * nx + i as usize] = (gx * gx + gy * gy).sqrt() / 16.0;
        }
    }
    out
}

/// Frequency coordinate of FFT bin `k` on the quadrant-shifted normalized grid.
fn shifted_coord(k: usize, n: usize) -> f64 {
    if n % 2 == 1 {
        let h = (n - 1) / 2;
        let m = if k <= h { k as f64 } else { k as f64 - n as f64 };
        if n == 1 {
            0.0
        } else {
            m / (n - 1) as f64
        }
    } else {
        let m = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
        m / n as f64
    }
}

struct Orientation {
    filters: Vec<Vec<f64>>,
    /// Energy sums of the spatial filters, used to predict the noise energy.
    sum_an2: f64,
    sum_ai_aj: f64,
    /// Mean squared value of the smallest-scale filter (times pixel count).
    em_n: f64,
}

struct FilterBank {
    nx: usize,
    ny: usize,
    fft: Fft2,
    orients: Vec<Orientation>,
}

impl FilterBank {
    fn new(nx: usize, ny: usize) -> Self {
        let n = nx * ny;
        let fft = Fft2::new(nx, ny);
        let mut radius = vec![0.0; n];
        let mut sin_t = vec![0.0; n];
        let mut cos_t = vec![0.0; n];
        let mut lowpass = vec![0.0; n];
        for j in 0..ny {
            let y = shifted_coord(j, ny);
            for i in 0..nx {
                let x = shifted_coord(i, nx);
                let p = j * nx + i;
                let r = (x * x + y * y).sqrt();
                lowpass[p] = 1.0 / (1.0 + (r / LOWPASS_CUTOFF).powi(2 * LOWPASS_ORDER));
                radius[p] = r;
                let th = (-y).atan2(x);
                sin_t[p] = th.sin();
                cos_t[p] = th.cos();
            }
        }
        radius[0] = 1.0;
        let log_gabor: Vec<Vec<f64>> = (0..N_SCALE)
            .map(|s| {
                let fo = 1.0 / (MIN_WAVELENGTH * MULT.powi(s as i32));
                let denom = 2.0 * SIGMA_ON_F.ln().powi(2);
                let mut g: Vec<f64> = radius
                    .iter()
                    .zip(&lowpass)
                    .map(|(&r, &lp)| (-(r / fo).ln().powi(2) / denom).exp() * lp)
                    .collect();
                g[0] = 0.0;
                g
            })
            .collect();
        let theta_sigma = PI / N_ORIENT as f64 / D_THETA_ON_SIGMA;
        let orients = (0..N_ORIENT)
            .map(|o| {
                let angl = o as f64 * PI / N_ORIENT as f64;
                let (sa, ca) = angl.sin_cos();
                let spread: Vec<f64> = (0..n)
                    .map(|p| {
                        let ds = sin_t[p] * ca - cos_t[p] * sa;
                        let dc = cos_t[p] * ca + sin_t[p] * sa;
                        let dtheta = ds.atan2(dc).abs();
                        (-dtheta * dtheta / (2.0 * theta_sigma * theta_sigma)).exp()
                    })
                    .collect();
                let filters: Vec<Vec<f64>> = log_gabor
                    .iter()
                    .map(|g| g.iter().zip(&spread).map(|(a, b)| a * b).collect())
                    .collect();
                let em_n = filters[0].iter().map(|v| v * v).sum();
                let spatial: Vec<Vec<f64>> = filters
                    .iter()
                    .map(|f| {
                        let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                        fft.inverse(&mut buf);
                        let s = (n as f64).sqrt();
                        buf.into_iter().map(|c| c.re * s).collect()
                    })
                    .collect();
                let sum_an2 = spatial.iter().flat_map(|f| f.iter().map(|v| v * v)).sum();
                let mut sum_ai_aj = 0.0;
                for si in 0..N_SCALE {
                    for sj in si + 1..N_SCALE {
                        sum_ai_aj += spatial[si].iter().zip(&spatial[sj]).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                Orientation {
                    filters,
                    sum_an2,
                    sum_ai_aj,
                    em_n,
                }
            })
            .collect();
        FilterBank { nx, ny, fft, orients }
    }

    fn phase_congruency(&self, img: &[f64]) -> Vec<f64> {
        let n = img.len();
        let mut spectrum: Vec<Complex64> = img.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward(&mut spectrum);
        let mut energy_all = vec![0.0; n];
        let mut an_all = vec![0.0; n];
        for o in &self.orients {
            let mut sum_e = vec![0.0; n];
            let mut sum_o = vec![0.0; n];
            let mut responses: Vec<Vec<Complex64>> = Vec::with_capacity(N_SCALE);
            for f in &o.filters {
                let mut eo: Vec<Complex64> = spectrum.iter().zip(f).map(|(c, &h)| c * h).collect();
                self.fft.inverse(&mut eo);
                for p in 0..n {
                    an_all[p] += eo[p].norm();
                    sum_e[p] += eo[p].re;
                    sum_o[p] += eo[p].im;
                }
                responses.push(eo);
            }
            let mut energy = vec![0.0; n];
            for p in 0..n {
                let xe = (sum_e[p] * sum_e[p] + sum_o[p] * sum_o[p]).sqrt() + EPS;
                let (me, mo) = (sum_e[p] / xe, sum_o[p] / xe);
                for eo in &responses {
                    let (e, od) = (eo[p].re, eo[p].im);
                    energy[p] += e * me + od * mo - (e * mo - od * me).abs();
                }
            }
            let mut e2: Vec<f64> = responses[0].iter().map(|c| c.norm_sqr()).collect();
            let median = median_in_place(&mut e2);
            let mean_e2n = -median / 0.5f64.ln();
            let noise_power = if o.em_n > 0.0 { mean_e2n / o.em_n } else { 0.0 };
            let est_noise_energy2 = 2.0 * noise_power * o.sum_an2 + 4.0 * noise_power * o.sum_ai_aj;
            let tau = (est_noise_energy2 / 2.0).max(0.0).sqrt();
            let mean_noise = tau * (PI / 2.0).sqrt();
            let sigma_noise = ((2.0 - PI / 2.0) * tau * tau).sqrt();
            let threshold = (mean_noise + NOISE_K * sigma_noise) / NOISE_RESCALE;
            for p in 0..n {
                energy_all[p] += (energy[p] - threshold).max(0.0);
            }
        }
        energy_all
            .iter()
            .zip(&an_all)
            .map(|(&e, &a)| if a > 0.0 { e / a } else { 0.0 })
            .collect()
    }
}

fn median_in_place(v: &mut [f64]) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
