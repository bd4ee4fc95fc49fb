use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{DisplacementField, Geometry, Grid};

/// Control-point spacings (mm) covered by a registration sweep.
pub const SWEEP_SPACINGS: [f64; 6] = [50.0, 70.0, 90.0, 110.0, 130.0, 150.0];

/// Uniform cubic B-spline basis weights for fractional position `t` in `[0, 1)`.
#[inline]
pub fn cubic_weights(t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    let t2 = t * t;
    let t3 = t2 * t;
    [
        s * s * s / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

/// Free-form deformation on a regular grid of control points.
///
/// Control point `(a, b, c)` sits at `grid_origin + (a, b, c) * grid_spacing`;
/// coefficients are displacements in mm, x-fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BSplineTransform {
    pub grid_spacing: f64,
    pub grid_origin: [f64; 3],
    pub grid_dims: [usize; 3],
    pub coefficients: Vec<[f64; 3]>,
}

impl BSplineTransform {
    /// Zero transform whose support covers every voxel center of `fixed`.
    pub fn identity(fixed: &Geometry, grid_spacing: f64) -> Result<Self> {
        if !(grid_spacing > 0.0) || !grid_spacing.is_finite() {
            return Err(Error::InvalidArgument(format!("grid spacing must be > 0, got {grid_spacing}")));
        }
        let lo = fixed.world(0, 0, 0);
        let ext = fixed.extent();
        let mut grid_origin = [0.0; 3];
        let mut grid_dims = [0usize; 3];
        for a in 0..3 {
            let span = ext[a] - fixed.spacing[a];
            grid_origin[a] = lo[a] - grid_spacing;
            grid_dims[a] = (span / grid_spacing + 1e-9).floor() as usize + 4;
        }
        let n = grid_dims.iter().product();
        Ok(BSplineTransform {
            grid_spacing,
            grid_origin,
            grid_dims,
            coefficients: vec![[0.0; 3]; n],
        })
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid_spacing > 0.0) || self.grid_dims.iter().any(|&d| d < 4) {
            return Err(Error::InvalidArgument(format!(
                "bad control grid: spacing {} dims {:?}",
                self.grid_spacing, self.grid_dims
            )));
        }
        if self.coefficients.len() != self.grid_dims.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients for control grid {:?}",
                self.coefficients.len(),
                self.grid_dims
            )));
        }
        if self.coefficients.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn control_index(&self, a: usize, b: usize, c: usize) -> usize {
        a + self.grid_dims[0] * (b + self.grid_dims[1] * c)
    }

    /// Whether every voxel center of `g` lies inside the support.
    pub fn covers(&self, g: &Geometry) -> bool {
        let [nx, ny, nz] = g.dims;
        self.support(g.world(0, 0, 0)).is_some() && self.support(g.world(nx - 1, ny - 1, nz - 1)).is_some()
    }

    /// First control index and basis weights along one axis, if the 4-point
    /// neighbourhood of `x` lies inside the grid.
    #[inline]
    pub(crate) fn axis_support(&self, axis: usize, x: f64) -> Option<(usize, [f64; 4])> {
        let u = (x - self.grid_origin[axis]) / self.grid_spacing;
        let mut cell = u.floor();
        let mut t = u - cell;
        // exact upper knot: use the cell below with t = 1
        if cell + 2.0 > (self.grid_dims[axis] - 1) as f64 && t.abs() < 1e-9 {
            cell -= 1.0;
            t = 1.0;
        }
        if !(cell >= 1.0) || cell + 2.0 > (self.grid_dims[axis] - 1) as f64 {
            return None;
        }
        Some((cell as usize - 1, cubic_weights(t)))
    }

    pub(crate) fn support(&self, p: [f64; 3]) -> Option<[(usize, [f64; 4]); 3]> {
        Some([
            self.axis_support(0, p[0])?,
            self.axis_support(1, p[1])?,
            self.axis_support(2, p[2])?,
        ])
    }

    #[inline]
    pub(crate) fn displace_with(&self, s: &[(usize, [f64; 4]); 3]) -> [f64; 3] {
        let mut d = [0.0; 3];
        for (c, wz) in s[2].1.iter().enumerate() {
            for (b, wy) in s[1].1.iter().enumerate() {
                let wyz = wy * wz;
                let row = self.control_index(s[0].0, s[1].0 + b, s[2].0 + c);
                for (a, wx) in s[0].1.iter().enumerate() {
                    let w = wx * wyz;
                    let k = &self.coefficients[row + a];
                    d[0] += w * k[0];
                    d[1] += w * k[1];
                    d[2] += w * k[2];
                }
            }
        }
        d
    }

    /// Displacement at world point `p`, in mm.
    pub fn displace(&self, p: [f64; 3]) -> Result<[f64; 3]> {
        let s = self.support(p).ok_or(Error::OutOfSupport(p[0], p[1], p[2]))?;
        Ok(self.displace_with(&s))
    }

    /// Dense displacement sampled at the voxel centers of `g`.
    pub fn displacement_field(&self, g: &Geometry) -> Result<DisplacementField> {
        if !self.covers(g) {
            return Err(Error::InvalidArgument("transform support does not cover the grid".into()));
        }
        Grid::from_fn(*g, |[i, j, k]| {
            let s = self.support(g.world(i, j, k)).expect("covered grid");
            self.displace_with(&s).map(|v| v as f32)
        })
    }

    /// Root-mean-square displacement over the voxel centers of `g`.
    pub fn rms_displacement(&self, g: &Geometry) -> Result<f64> {
        let f = self.displacement_field(g)?;
        let ss: f64 = f
            .data()
            .iter()
            .map(|d| d.iter().map(|&c| (c as f64).powi(2)).sum::<f64>())
            .sum();
        Ok((ss / f.data().len() as f64).sqrt())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::json::save_json(self, path)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let t: Self = crate::json::load_json(path)?;
        t.validate()?;
        Ok(t)
    }
}

/// Displacement of `t` at world point `p`.
pub fn bspline_displace(t: &BSplineTransform, p: [f64; 3]) -> Result<[f64; 3]> {
    t.displace(p)
}

/// Per-axis supports for every voxel index of a fixed geometry.
pub(crate) struct SupportTable {
    pub(crate) axes: [Vec<(usize, [f64; 4])>; 3],
}

impl SupportTable {
    pub(crate) fn new(t: &BSplineTransform, g: &Geometry) -> Result<Self> {
        let mut axes: [Vec<(usize, [f64; 4])>; 3] = Default::default();
        for (a, axis) in axes.iter_mut().enumerate() {
            for i in 0..g.dims[a] {
                let x = g.origin[a] + i as f64 * g.spacing[a];
                let s = t.axis_support(a, x).ok_or_else(|| {
                    let mut p = g.origin;
                    p[a] = x;
                    Error::OutOfSupport(p[0], p[1], p[2])
                })?;
                axis.push(s);
            }
        }
        Ok(SupportTable { axes })
    }

    #[inline]
    pub(crate) fn at(&self, [i, j, k]: [usize; 3]) -> [(usize, [f64; 4]); 3] {
        [self.axes[0][i], self.axes[1][j], self.axes[2][k]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_partition_unity() {
        for k in 0..=20 {
            let w = cubic_weights(k as f64 / 20.0);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(w.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn identity_grid_covers_fixed() {
        let g = Geometry::desk();
        for s in SWEEP_SPACINGS {
            let t = BSplineTransform::identity(&g, s).unwrap();
            assert!(t.covers(&g), "spacing {s}");
            t.validate().unwrap();
        }
    }

    #[test]
    fn out_of_support_is_reported() {
        let g = Geometry::centered([10, 10, 10], [1.0; 3]).unwrap();
        let t = BSplineTransform::identity(&g, 5.0).unwrap();
        assert!(matches!(t.displace([1e3, 0.0, 0.0]), Err(Error::OutOfSupport(..))));
    }
}
