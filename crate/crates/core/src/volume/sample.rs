use rayon::prelude::*;

use super::{DisplacementField, Geometry, LabelMap, Volume};
use crate::error::Result;

/// What a sampler returns for points outside the hull of voxel centers.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Background {
    /// The smallest value stored in the volume.
    #[default]
    Min,
    Value(f32),
    /// Replicate the nearest border voxel.
    Clamp,
}

// Fractional indices this close to an integer are treated as exact voxel centers.
const SNAP: f64 = 1e-9;

#[inline]
fn snap(u: f64) -> f64 {
    let r = u.round();
    if (u - r).abs() < SNAP {
        r
    } else {
        u
    }
}

/// Cell lookup along one axis: lower neighbour index and fractional offset.
/// `None` means outside `[0, n-1]` and no clamping requested.
#[inline]
fn locate(u: f64, n: usize, clamp: bool) -> Option<(usize, f64, bool)> {
    let u = snap(u);
    let hi = (n - 1) as f64;
    let (u, clamped) = if u < 0.0 || u > hi {
        if !clamp {
            return None;
        }
        (u.clamp(0.0, hi), true)
    } else {
        (u, false)
    };
    if n == 1 {
        return Some((0, 0.0, clamped));
    }
    let i0 = (u.floor() as usize).min(n - 2);
    Some((i0, u - i0 as f64, clamped))
}

/// Trilinear interpolator bound to one volume with a resolved background.
#[derive(Clone, Copy, Debug)]
pub struct Trilinear<'a> {
    vol: &'a Volume,
    background: Option<f64>,
}

impl<'a> Trilinear<'a> {
    pub fn new(vol: &'a Volume, background: Background) -> Self {
        let background = match background {
            Background::Min => Some(vol.min_value() as f64),
            Background::Value(v) => Some(v as f64),
            Background::Clamp => None,
        };
        Trilinear { vol, background }
    }

    pub fn geometry(&self) -> &Geometry {
        self.vol.geometry()
    }

    #[inline]
    pub fn sample(&self, p: [f64; 3]) -> f64 {
        self.sample_index(self.vol.geometry().continuous_index(p))
    }

    /// Sample at a fractional voxel index.
    #[inline]
    pub fn sample_index(&self, u: [f64; 3]) -> f64 {
        let g = self.vol.geometry();
        let clamp = self.background.is_none();
        let (Some(cx), Some(cy), Some(cz)) = (
            locate(u[0], g.dims[0], clamp),
            locate(u[1], g.dims[1], clamp),
            locate(u[2], g.dims[2], clamp),
        ) else {
            return self.background.unwrap_or(0.0);
        };
        let c = self.corners(cx.0, cy.0, cz.0);
        let (tx, ty, tz) = (cx.1, cy.1, cz.1);
        let c00 = c[0] + tx * (c[1] - c[0]);
        let c10 = c[2] + tx * (c[3] - c[2]);
        let c01 = c[4] + tx * (c[5] - c[4]);
        let c11 = c[6] + tx * (c[7] - c[6]);
        let c0 = c00 + ty * (c10 - c00);
        let c1 = c01 + ty * (c11 - c01);
        c0 + tz * (c1 - c0)
    }

    /// Value and world-space gradient (per mm) of the interpolant.
    ///
    /// On a cell face the derivative of the upper cell is returned. Outside
    /// the hull the gradient is zero (background) or zero along clamped axes.
    #[inline]
    pub fn sample_with_gradient(&self, p: [f64; 3]) -> (f64, [f64; 3]) {
        let g = self.vol.geometry();
        let u = g.continuous_index(p);
        let clamp = self.background.is_none();
        let (Some(cx), Some(cy), Some(cz)) = (
            locate(u[0], g.dims[0], clamp),
            locate(u[1], g.dims[1], clamp),
            locate(u[2], g.dims[2], clamp),
        ) else {
            return (self.background.unwrap_or(0.0), [0.0; 3]);
        };
        let c = self.corners(cx.0, cy.0, cz.0);
        let (tx, ty, tz) = (cx.1, cy.1, cz.1);
        let (sx, sy, sz) = (1.0 - tx, 1.0 - ty, 1.0 - tz);

        let value = sz * (sy * (sx * c[0] + tx * c[1]) + ty * (sx * c[2] + tx * c[3]))
            + tz * (sy * (sx * c[4] + tx * c[5]) + ty * (sx * c[6] + tx * c[7]));
        let dx = sz * (sy * (c[1] - c[0]) + ty * (c[3] - c[2]))
            + tz * (sy * (c[5] - c[4]) + ty * (c[7] - c[6]));
        let dy = sz * (sx * (c[2] - c[0]) + tx * (c[3] - c[1]))
            + tz * (sx * (c[6] - c[4]) + tx * (c[7] - c[5]));
        let dz = sy * (sx * (c[4] - c[0]) + tx * (c[5] - c[1]))
            + ty * (sx * (c[6] - c[2]) + tx * (c[7] - c[3]));

        let axis = |d: f64, n: usize, clamped: bool, s: f64| {
            if clamped || n == 1 {
                0.0
            } else {
                d / s
            }
        };
        (
            value,
            [
                axis(dx, g.dims[0], cx.2, g.spacing[0]),
                axis(dy, g.dims[1], cy.2, g.spacing[1]),
                axis(dz, g.dims[2], cz.2, g.spacing[2]),
            ],
        )
    }

    #[inline]
    fn corners(&self, i: usize, j: usize, k: usize) -> [f64; 8] {
        let g = self.vol.geometry();
        let d = self.vol.data();
        let [nx, ny, nz] = g.dims;
        let i1 = (i + 1).min(nx - 1);
        let j1 = (j + 1).min(ny - 1);
        let k1 = (k + 1).min(nz - 1);
        let at = |a: usize, b: usize, c: usize| d[g.index(a, b, c)] as f64;
        [
            at(i, j, k),
            at(i1, j, k),
            at(i, j1, k),
            at(i1, j1, k),
            at(i, j, k1),
            at(i1, j, k1),
            at(i, j1, k1),
            at(i1, j1, k1),
        ]
    }
}

/// Trilinear sample at world point `p` with the default background (volume minimum).
///
/// Each call scans the volume for its minimum; bind a [`Trilinear`] for repeated use.
pub fn trilinear_sample(v: &Volume, p: [f64; 3]) -> f64 {
    Trilinear::new(v, Background::Min).sample(p)
}

pub fn trilinear_sample_with(v: &Volume, p: [f64; 3], background: Background) -> f64 {
    Trilinear::new(v, background).sample(p)
}

/// Nearest-neighbour label lookup; outside the grid is background (0).
#[inline]
pub fn nearest_label(l: &LabelMap, p: [f64; 3]) -> u16 {
    let g = l.geometry();
    let u = g.continuous_index(p);
    let mut idx = [0usize; 3];
    for a in 0..3 {
        let r = u[a].round();
        if r < 0.0 || r > (g.dims[a] - 1) as f64 {
            return 0;
        }
        idx[a] = r as usize;
    }
    l.get(idx[0], idx[1], idx[2])
}

/// Resample onto a new spacing covering the same world extent.
///
/// Output dims are `ceil(extent / spacing)`; the lower voxel edge is kept.
/// Output centres that fall in the half-voxel rim outside the input's
/// centre hull take the nearest border value.
pub fn resample(v: &Volume, target_spacing: [f64; 3]) -> Result<Volume> {
    let g = v.geometry();
    let extent = g.extent();
    let edge = g.lower_edge();
    let mut dims = [0usize; 3];
    for a in 0..3 {
        // tolerate representation noise in extent/spacing before ceil
        let ratio = extent[a] / target_spacing[a];
        let r = ratio.round();
        dims[a] = if (ratio - r).abs() < 1e-9 { r as usize } else { ratio.ceil() as usize };
        dims[a] = dims[a].max(1);
    }
    let origin = std::array::from_fn(|a| edge[a] + 0.5 * target_spacing[a]);
    let out = Geometry::new(dims, target_spacing, origin)?;
    let s = Trilinear::new(v, Background::Clamp);
    Volume::from_fn(out, |[i, j, k]| s.sample(out.world(i, j, k)) as f32)
}

/// Backward warp: `out(x) = v(x + d(x))`, trilinear with minimum background.
pub fn warp(v: &Volume, d: &DisplacementField) -> Result<Volume> {
    let g = *v.geometry();
    g.ensure_same(d.geometry(), "warp")?;
    let s = Trilinear::new(v, Background::Min);
    let disp = d.data();
    Volume::from_fn(g, |[i, j, k]| {
        let u = disp[g.index(i, j, k)];
        let p = g.world(i, j, k);
        s.sample([p[0] + u[0] as f64, p[1] + u[1] as f64, p[2] + u[2] as f64]) as f32
    })
}

/// Backward warp of a label map with nearest-neighbour lookup.
pub fn warp_labels(l: &LabelMap, d: &DisplacementField) -> Result<LabelMap> {
    let g = *l.geometry();
    g.ensure_same(d.geometry(), "warp_labels")?;
    let disp = d.data();
    let data: Vec<u16> = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let [i, j, k] = g.coords(idx);
            let u = disp[idx];
            let p = g.world(i, j, k);
            nearest_label(l, [p[0] + u[0] as f64, p[1] + u[1] as f64, p[2] + u[2] as f64])
        })
        .collect();
    LabelMap::from_vec(g, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], f: impl Fn([f64; 3]) -> f64 + Sync) -> Volume {
        let g = Geometry::new(dims, spacing, origin).unwrap();
        Volume::from_fn(g, |[i, j, k]| f(g.world(i, j, k)) as f32).unwrap()
    }

    #[test]
    fn exact_at_voxel_centers() {
        let g = Geometry::new([5, 4, 3], [1.5, 0.7, 2.0], [-3.1, 0.35, 7.0]).unwrap();
        let v = Volume::from_fn(g, |[i, j, k]| (i * 100 + j * 10 + k) as f32).unwrap();
        let s = Trilinear::new(&v, Background::Min);
        for k in 0..3 {
            for j in 0..4 {
                for i in 0..5 {
                    assert_eq!(s.sample(g.world(i, j, k)), v.get(i, j, k) as f64);
                }
            }
        }
    }

    #[test]
    fn midpoint_is_average() {
        let g = Geometry::new([2, 1, 1], [1.0; 3], [0.0; 3]).unwrap();
        let v = Volume::from_vec(g, vec![0.0, 10.0]).unwrap();
        assert_eq!(trilinear_sample(&v, [0.5, 0.0, 0.0]), 5.0);
    }

    #[test]
    fn outside_returns_background() {
        let g = Geometry::new([3, 3, 3], [1.0; 3], [0.0; 3]).unwrap();
        let mut data = vec![0.0f32; 27];
        data[4] = -1024.0;
        let v = Volume::from_vec(g, data).unwrap();
        assert_eq!(trilinear_sample(&v, [100.0, -50.0, 3.0]), -1024.0);
        assert_eq!(trilinear_sample_with(&v, [100.0, 0.0, 0.0], Background::Value(-1.0)), -1.0);
        assert_eq!(trilinear_sample_with(&v, [100.0, 0.0, 0.0], Background::Clamp), 0.0);
    }

    #[test]
    fn gradient_matches_ramp_slope() {
        let v = ramp([6, 6, 6], [2.0, 1.0, 0.5], [0.0; 3], |p| 3.0 * p[0] - 2.0 * p[1] + 0.25 * p[2]);
        let s = Trilinear::new(&v, Background::Min);
        let (val, grad) = s.sample_with_gradient([3.3, 2.7, 1.1]);
        assert!((val - (3.0 * 3.3 - 2.0 * 2.7 + 0.25 * 1.1)).abs() < 1e-4);
        assert!((grad[0] - 3.0).abs() < 1e-5);
        assert!((grad[1] + 2.0).abs() < 1e-5);
        assert!((grad[2] - 0.25).abs() < 1e-5);
    }

    #[test]
    fn resample_identity_and_constant() {
        let v = ramp([4, 5, 6], [1.0, 1.0, 1.0], [0.0; 3], |p| p[0] + 2.0 * p[1] - p[2]);
        let same = resample(&v, [1.0; 3]).unwrap();
        assert_eq!(same.geometry(), v.geometry());
        assert_eq!(same.data(), v.data());

        let c = ramp([7, 5, 3], [1.0, 1.0, 2.0], [0.0; 3], |_| 42.0);
        let r = resample(&c, [0.7, 1.9, 3.1]).unwrap();
        assert!(r.data().iter().all(|&x| x == 42.0));
        let rr = resample(&r, [0.7, 1.9, 3.1]).unwrap();
        assert_eq!(rr.data(), r.data());
    }

    #[test]
    fn resample_ramp_to_coarser_grid() {
        // closed-form oracle: a linear function is reproduced exactly by trilinear interpolation
        let f = |p: [f64; 3]| 0.5 * p[0] - 0.25 * p[1] + 2.0 * p[2] + 3.0;
        let v = ramp([16, 12, 8], [1.0; 3], [-4.0, 2.0, 1.0], f);
        let r = resample(&v, [2.0; 3]).unwrap();
        assert_eq!(r.dims(), [8, 6, 4]);
        let g = *r.geometry();
        for idx in 0..g.len() {
            let [i, j, k] = g.coords(idx);
            let expect = f(g.world(i, j, k));
            assert!((r.data()[idx] as f64 - expect).abs() < 1e-5, "voxel {idx}");
        }
    }

    #[test]
    fn warp_zero_and_shift() {
        let v = ramp([6, 5, 4], [1.0; 3], [0.0; 3], |p| p[0] * p[0] + p[1] - p[2]);
        let g = *v.geometry();
        let zero = DisplacementField::zeros(g).unwrap();
        assert_eq!(warp(&v, &zero).unwrap().data(), v.data());

        let shift = DisplacementField::filled(g, [1.0, 0.0, 0.0]).unwrap();
        let w = warp(&v, &shift).unwrap();
        for k in 0..4 {
            for j in 0..5 {
                for i in 0..5 {
                    assert_eq!(w.get(i, j, k), v.get(i + 1, j, k));
                }
            }
        }

        let labels = LabelMap::from_fn(g, |[i, j, _]| ((i + j) % 3) as u16).unwrap();
        assert_eq!(warp_labels(&labels, &zero).unwrap().data(), labels.data());
        let wl = warp_labels(&labels, &shift).unwrap();
        assert_eq!(wl.get(2, 3, 1), labels.get(3, 3, 1));
        assert_eq!(wl.get(5, 3, 1), 0);
    }

    #[test]
    fn warp_sinusoid_on_ramp_matches_composition() {
        // oracle: ramp f(p) = a.p + c composed with p + d(p) in closed form
        let a = [0.8, -0.3, 0.5];
        let f = move |p: [f64; 3]| a[0] * p[0] + a[1] * p[1] + a[2] * p[2] + 10.0;
        let v = ramp([20, 18, 16], [1.0, 1.2, 1.5], [-5.0, -4.0, 0.0], f);
        let g = *v.geometry();
        let disp = |p: [f64; 3]| {
            [
                1.5 * (0.3 * p[1]).sin(),
                -1.0 * (0.2 * p[2] + 0.4).cos(),
                0.8 * (0.25 * p[0]).sin(),
            ]
        };
        let d = DisplacementField::from_fn(g, |[i, j, k]| disp(g.world(i, j, k)).map(|c| c as f32)).unwrap();
        let w = warp(&v, &d).unwrap();
        for k in 2..14 {
            for j in 2..16 {
                for i in 2..18 {
                    let p = g.world(i, j, k);
                    let u = d.get(i, j, k);
                    let q = [p[0] + u[0] as f64, p[1] + u[1] as f64, p[2] + u[2] as f64];
                    assert!((w.get(i, j, k) as f64 - f(q)).abs() < 1e-4);
                }
            }
        }
    }
}
