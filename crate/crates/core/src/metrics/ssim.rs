use rayon::prelude::*;

use super::filter::{gaussian_taps, separable, slice_f64};
use crate::error::Result;
use crate::volume::Volume;

const K1: f64 = 0.01;
const K2: f64 = 0.03;
const SIGMA: f64 = 1.5;
const RADIUS: usize = 5;

/// Mean structural similarity for data normalized to [-1, 1].
pub fn ssim(a: &Volume, b: &Volume) -> Result<f64> {
    ssim_with_range(a, b, 2.0)
}

/// Axial-slice SSIM averaged over slices, for a declared dynamic range.
///
/// 11x11 Gaussian window (sigma 1.5) with reflect padding; the local map
/// is averaged over every pixel of the slice.
pub fn ssim_with_range(a: &Volume, b: &Volume, dynamic_range: f64) -> Result<f64> {
    a.geometry().ensure_same(b.geometry(), "ssim")?;
    let [nx, ny, nz] = a.dims();
    let plane = nx * ny;
    let taps = gaussian_taps(SIGMA, RADIUS);
    let c1 = (K1 * dynamic_range).powi(2);
    let c2 = (K2 * dynamic_range).powi(2);
    let per_slice: Vec<f64> = (0..nz)
        .into_par_iter()
        .map(|k| {
            let x = slice_f64(a.data(), k, plane);
            let y = slice_f64(b.data(), k, plane);
            slice_ssim(&x, &y, nx, ny, &taps, c1, c2)
        })
        .collect();
    Ok(per_slice.iter().sum::<f64>() / nz as f64)
}

pub(crate) fn slice_ssim(x: &[f64], y: &[f64], nx: usize, ny: usize, taps: &[f64], c1: f64, c2: f64) -> f64 {
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
    let mx = separable(x, nx, ny, taps);
    let my = separable(y, nx, ny, taps);
    let sxx = separable(&xx, nx, ny, taps);
    let syy = separable(&yy, nx, ny, taps);
    let sxy = separable(&xy, nx, ny, taps);
    let mut sum = 0.0;
    for p in 0..nx * ny {
        let vx = sxx[p] - mx[p] * mx[p];
        let vy = syy[p] - my[p] * my[p];
        let cov = sxy[p] - mx[p] * my[p];
        let num = (2.0 * mx[p] * my[p] + c1) * (2.0 * cov + c2);
        let den = (mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2);
        sum += num / den;
    }
    sum / (nx * ny) as f64
}
