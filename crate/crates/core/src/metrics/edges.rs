use std::collections::VecDeque;

use rayon::prelude::*;

use super::filter::{gaussian_taps, reflect, separable, slice_f64};
use crate::error::{Error, Result};
use crate::volume::Volume;

const SIGMA: f64 = 1.0;
const LOW: f64 = 0.1;
const HIGH: f64 = 0.2;

/// Binary edge map of a volume, one Canny pass per axial slice.
///
/// Hysteresis thresholds are fractions of each slice's peak gradient
/// magnitude (the dynamic range of the gradient image).
pub fn canny_edges(v: &Volume) -> Vec<bool> {
    let [nx, ny, nz] = v.dims();
    let plane = nx * ny;
    let slices: Vec<Vec<bool>> = (0..nz)
        .into_par_iter()
        .map(|k| canny_slice(&slice_f64(v.data(), k, plane), nx, ny))
        .collect();
    slices.concat()
}

pub(crate) fn canny_slice(img: &[f64], nx: usize, ny: usize) -> Vec<bool> {
    let n = nx * ny;
    let smooth = separable(img, nx, ny, &gaussian_taps(SIGMA, 4));
    let at = |i: isize, j: isize| smooth[reflect(j, ny) * nx + reflect(i, nx)];
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut mag = vec![0.0; n];
    for j in 0..ny as isize {
        for i in 0..nx as isize {
            let dx = (at(i + 1, j - 1) + 2.0 * at(i + 1, j) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i - 1, j) + at(i - 1, j + 1));
            let dy = (at(i - 1, j + 1) + 2.0 * at(i, j + 1) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i, j - 1) + at(i + 1, j - 1));
            let p = j as usize * nx + i as usize;
            gx[p] = dx / 8.0;
            gy[p] = dy / 8.0;
            mag[p] = (gx[p] * gx[p] + gy[p] * gy[p]).sqrt();
        }
    }
    let m_at = |i: isize, j: isize| {
        if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
            0.0
        } else {
            mag[j as usize * nx + i as usize]
        }
    };
    // non-maximum suppression along the quantized gradient direction
    let mut thin = vec![0.0; n];
    for j in 0..ny as isize {
        for i in 0..nx as isize {
            let p = j as usize * nx + i as usize;
            let m = mag[p];
            if m == 0.0 {
                continue;
            }
            let angle = gy[p].atan2(gx[p]).to_degrees().rem_euclid(180.0);
            let (di, dj) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let a = m_at(i + di, j + dj);
            let b = m_at(i - di, j - dj);
            if m >= a && m > b {
                thin[p] = m;
            }
        }
    }
    let peak = mag.iter().fold(0.0f64, |a, &b| a.max(b));
    if !(peak > 0.0) {
        return vec![false; n];
    }
    let low = LOW * peak;
    let high = HIGH * peak;
    let mut edge = vec![false; n];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for p in 0..n {
        if thin[p] >= high {
            edge[p] = true;
            queue.push_back(p);
        }
    }
    while let Some(p) = queue.pop_front() {
        let (i, j) = ((p % nx) as isize, (p / nx) as isize);
        for dj in -1..=1isize {
            for di in -1..=1isize {
                let (a, b) = (i + di, j + dj);
                if a < 0 || b < 0 || a >= nx as isize || b >= ny as isize {
                    continue;
                }
                let q = b as usize * nx + a as usize;
                if !edge[q] && thin[q] >= low {
                    edge[q] = true;
                    queue.push_back(q);
                }
            }
        }
    }
    edge
}

/// Edge maps grown by one pixel in-plane (8-neighbourhood).
fn dilate_in_plane(e: &[bool], nx: usize, ny: usize) -> Vec<bool> {
    let plane = nx * ny;
    let mut out = vec![false; e.len()];
    for (p, &on) in e.iter().enumerate() {
        if !on {
            continue;
        }
        let base = p - p % plane;
        let (i, j) = (((p % plane) % nx) as isize, ((p % plane) / nx) as isize);
        for dj in -1..=1isize {
            for di in -1..=1isize {
                let (a, b) = (i + di, j + dj);
                if a >= 0 && b >= 0 && a < nx as isize && b < ny as isize {
                    out[base + b as usize * nx + a as usize] = true;
                }
            }
        }
    }
    out
}

/// `(EPR, EGR)` from binary edge maps of the reference and the candidate.
///
/// A reference edge is preserved when a candidate edge lies within one
/// pixel in-plane; a candidate edge is generated when no reference edge does.
pub fn edge_ratios_from_maps(reference: &[bool], candidate: &[bool], nx: usize, ny: usize) -> Result<(f64, f64)> {
    if reference.len() != candidate.len() || nx * ny == 0 || reference.len() % (nx * ny) != 0 {
        return Err(Error::ShapeMismatch("edge maps differ in size".into()));
    }
    let n_ref = reference.iter().filter(|&&e| e).count();
    if n_ref == 0 {
        return Err(Error::NoEdgesInReference);
    }
    let near_candidate = dilate_in_plane(candidate, nx, ny);
    let near_reference = dilate_in_plane(reference, nx, ny);
    let preserved = reference.iter().zip(&near_candidate).filter(|(&r, &c)| r && c).count();
    let generated = candidate.iter().zip(&near_reference).filter(|(&c, &r)| c && !r).count();
    Ok((preserved as f64 / n_ref as f64, generated as f64 / n_ref as f64))
}

/// Edge preservation and generation ratios of `b` against reference `a`.
pub fn edge_ratios(a: &Volume, b: &Volume) -> Result<(f64, f64)> {
    a.geometry().ensure_same(b.geometry(), "edge_ratios")?;
    let [nx, ny, _] = a.dims();
    edge_ratios_from_maps(&canny_edges(a), &canny_edges(b), nx, ny)
}
