use rayon::prelude::*;

use super::Volume;
use crate::error::{Error, Result};

/// Separable Gaussian blur with a physical `sigma_mm`, edges replicated.
///
/// Taps extend to three standard deviations along each axis. `sigma_mm == 0`
/// returns a copy.
pub fn gaussian_smooth(v: &Volume, sigma_mm: f64) -> Result<Volume> {
    if !(sigma_mm >= 0.0) || !sigma_mm.is_finite() {
        return Err(Error::InvalidArgument(format!("smoothing sigma must be >= 0, got {sigma_mm}")));
    }
    let g = *v.geometry();
    let mut data: Vec<f64> = v.data().iter().map(|&x| x as f64).collect();
    if sigma_mm > 0.0 {
        for axis in 0..3 {
            data = smooth_axis(&data, g.dims, axis, sigma_mm / g.spacing[axis]);
        }
    }
    Volume::from_vec(g, data.into_iter().map(|x| x as f32).collect())
}

fn smooth_axis(data: &[f64], dims: [usize; 3], axis: usize, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-r..=r).map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    let taps: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let stride = [1, dims[0], dims[0] * dims[1]][axis];
    let n = dims[axis] as isize;
    (0..data.len())
        .into_par_iter()
        .map(|idx| {
            let c = (idx / stride) % dims[axis];
            let line = idx - c * stride;
            taps.iter()
                .enumerate()
                .map(|(t, w)| {
                    let q = (c as isize + t as isize - r).clamp(0, n - 1) as usize;
                    w * data[line + q * stride]
                })
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    #[test]
    fn constant_and_mass() {
        let g = Geometry::centered([9, 8, 7], [1.0, 2.0, 1.5]).unwrap();
        let c = Volume::filled(g, 3.5).unwrap();
        let s = gaussian_smooth(&c, 2.0).unwrap();
        assert!(s.data().iter().all(|&x| (x - 3.5).abs() < 1e-5));
        // an interior impulse keeps its mass when the kernel fits inside the grid
        let g = Geometry::centered([21, 21, 21], [1.0; 3]).unwrap();
        let imp = Volume::from_fn(g, |c| if c == [10, 10, 10] { 1.0 } else { 0.0 }).unwrap();
        let s = gaussian_smooth(&imp, 1.5).unwrap();
        let sum: f64 = s.data().iter().map(|&x| x as f64).sum();
        assert!((sum - 1.0).abs() < 1e-5);
        assert_eq!(gaussian_smooth(&imp, 0.0).unwrap(), imp);
        assert!(gaussian_smooth(&imp, -1.0).is_err());
    }
}
