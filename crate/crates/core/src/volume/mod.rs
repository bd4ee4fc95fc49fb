//! Voxel grids with physical geometry.
//!
//! Every image in the toolkit is a [`Grid`]: an axis-aligned lattice with
//! per-axis spacing (mm) and the world position of voxel `(0, 0, 0)`.
//! Data is stored x-fastest. Scalar volumes, organ label maps and
//! displacement fields differ only in their voxel type.

mod filter;
mod rvol;
mod sample;
mod window;

pub use filter::gaussian_smooth;
pub use rvol::{read_rvol, read_rvol_file, write_rvol, write_rvol_file, RvolKind, RvolVoxel, RVOL_MAGIC};
pub use sample::{
    nearest_label, resample, trilinear_sample, trilinear_sample_with, warp, warp_labels, Background,
    Trilinear,
};
pub use window::{percentile_nearest_rank, window_normalize, ResolvedWindow, WindowMode, WindowSpec};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lattice geometry shared by volumes, label maps and displacement fields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    /// mm per voxel.
    pub spacing: [f64; 3],
    /// World position (mm) of the center of voxel (0, 0, 0).
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let g = Geometry {
            dims,
            spacing,
            origin,
        };
        g.validate()?;
        Ok(g)
    }

    /// A grid whose voxel centers are symmetric about the world origin.
    pub fn centered(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        let origin = std::array::from_fn(|a| -0.5 * (dims[a] as f64 - 1.0) * spacing[a]);
        Geometry::new(dims, spacing, origin)
    }

    /// Workstation-sized default: 128 x 128 x 64 voxels at 2 mm.
    pub fn desk() -> Self {
        Geometry::centered([128, 128, 64], [2.0, 2.0, 2.0]).expect("static geometry")
    }

    /// Full in-plane resolution (1 x 1 x 2 mm) over the desk field of view.
    pub fn full() -> Self {
        Geometry::centered([256, 256, 64], [1.0, 1.0, 2.0]).expect("static geometry")
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!("dims must be >= 1, got {:?}", self.dims)));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "spacing must be positive, got {:?}",
                self.spacing
            )));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidArgument("origin must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    #[inline]
    pub fn world(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    /// Fractional voxel index of a world point.
    #[inline]
    pub fn continuous_index(&self, p: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|a| (p[a] - self.origin[a]) / self.spacing[a])
    }

    /// Physical size covered by the voxels (edge to edge).
    pub fn extent(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.dims[a] as f64 * self.spacing[a])
    }

    /// Lower corner of the voxel-edge bounding box.
    pub fn lower_edge(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.origin[a] - 0.5 * self.spacing[a])
    }

    pub fn slice_len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub(crate) fn ensure_same(&self, other: &Geometry, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!("{what}: {self:?} vs {other:?}")))
        }
    }
}

/// Voxel types that can live in a [`Grid`].
pub trait Voxel: Copy + Send + Sync + PartialEq + std::fmt::Debug + 'static {
    /// Whether a value satisfies the grid invariants (finite for float data).
    fn is_valid(&self) -> bool;
}

impl Voxel for f32 {
    fn is_valid(&self) -> bool {
        self.is_finite()
    }
}

impl Voxel for u16 {
    fn is_valid(&self) -> bool {
        true
    }
}

impl Voxel for [f32; 3] {
    fn is_valid(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// Immutable voxel data plus geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    geometry: Geometry,
    data: Vec<T>,
}

/// Scalar image, 32-bit float intensities.
pub type Volume = Grid<f32>;
/// Organ-ID image; 0 is background.
pub type LabelMap = Grid<u16>;
/// Per-voxel displacement in world mm.
pub type DisplacementField = Grid<[f32; 3]>;

impl<T: Voxel> Grid<T> {
    pub fn from_vec(geometry: Geometry, data: Vec<T>) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {:?} voxels",
                data.len(),
                geometry.dims
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_valid()) {
            return Err(Error::InvalidArgument(format!("non-finite value at voxel {bad}")));
        }
        Ok(Grid { geometry, data })
    }

    pub fn filled(geometry: Geometry, value: T) -> Result<Self> {
        Grid::from_vec(geometry, vec![value; geometry.len()])
    }

    /// Builds a grid by evaluating `f` at every voxel index, slice-parallel.
    pub fn from_fn<F>(geometry: Geometry, f: F) -> Result<Self>
    where
        F: Fn([usize; 3]) -> T + Sync,
    {
        geometry.validate()?;
        let [nx, ny, _] = geometry.dims;
        let mut data = Vec::with_capacity(geometry.len());
        let slices: Vec<Vec<T>> = (0..geometry.dims[2])
            .into_par_iter()
            .map(|k| {
                let mut s = Vec::with_capacity(nx * ny);
                for j in 0..ny {
                    for i in 0..nx {
                        s.push(f([i, j, k]));
                    }
                }
                s
            })
            .collect();
        for s in slices {
            data.extend(s);
        }
        Grid::from_vec(geometry, data)
    }

    #[inline]
    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.geometry.index(i, j, k)]
    }

    /// Voxel-wise map into a new grid with the same geometry.
    pub fn map<U: Voxel>(&self, f: impl Fn(T) -> U + Sync) -> Result<Grid<U>> {
        Grid::from_vec(self.geometry, self.data.par_iter().map(|&v| f(v)).collect())
    }

    /// Copy of one axial (constant-z) slice, x-fastest.
    pub fn axial_slice(&self, k: usize) -> &[T] {
        let n = self.geometry.slice_len();
        &self.data[k * n..(k + 1) * n]
    }
}

impl Grid<f32> {
    pub fn min_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }
}

impl Grid<u16> {
    /// Binary (0/1) mask of the voxels carrying `id`.
    pub fn select(&self, id: u16) -> LabelMap {
        self.select_where(|l| l == id)
    }

    pub fn select_where(&self, pred: impl Fn(u16) -> bool + Sync) -> LabelMap {
        Grid {
            geometry: self.geometry,
            data: self.data.par_iter().map(|&l| u16::from(pred(l))).collect(),
        }
    }

    pub fn count(&self, id: u16) -> usize {
        self.data.iter().filter(|&&l| l == id).count()
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&l| l != 0).count()
    }

    /// World-space centroid of the voxels carrying `id`.
    pub fn centroid(&self, id: u16) -> Option<[f64; 3]> {
        let mut sum = [0.0f64; 3];
        let mut n = 0usize;
        for (idx, &l) in self.data.iter().enumerate() {
            if l == id {
                let [i, j, k] = self.geometry.coords(idx);
                let p = self.geometry.world(i, j, k);
                for a in 0..3 {
                    sum[a] += p[a];
                }
                n += 1;
            }
        }
        (n > 0).then(|| sum.map(|s| s / n as f64))
    }

    /// Sorted list of distinct labels present.
    pub fn labels_present(&self) -> Vec<u16> {
        let mut seen = vec![false; u16::MAX as usize + 1];
        for &l in &self.data {
            seen[l as usize] = true;
        }
        seen.iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(l, _)| l as u16)
            .collect()
    }
}

impl Grid<[f32; 3]> {
    pub fn zeros(geometry: Geometry) -> Result<Self> {
        Grid::filled(geometry, [0.0; 3])
    }

    /// Largest displacement magnitude in mm.
    pub fn max_magnitude(&self) -> f64 {
        self.data
            .iter()
            .map(|d| d.iter().map(|&c| (c as f64).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let g = Geometry::new([3, 4, 5], [1.0, 2.0, 3.0], [0.0; 3]).unwrap();
        for idx in 0..g.len() {
            let [i, j, k] = g.coords(idx);
            assert_eq!(g.index(i, j, k), idx);
        }
    }

    #[test]
    fn rejects_bad_geometry_and_data() {
        assert!(Geometry::new([0, 1, 1], [1.0; 3], [0.0; 3]).is_err());
        assert!(Geometry::new([1, 1, 1], [1.0, 0.0, 1.0], [0.0; 3]).is_err());
        let g = Geometry::new([2, 1, 1], [1.0; 3], [0.0; 3]).unwrap();
        assert!(Volume::from_vec(g, vec![1.0]).is_err());
        assert!(Volume::from_vec(g, vec![1.0, f32::NAN]).is_err());
        assert!(DisplacementField::from_vec(g, vec![[0.0; 3], [f32::INFINITY, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn centered_grid_is_symmetric() {
        let g = Geometry::desk();
        let a = g.world(0, 0, 0);
        let b = g.world(127, 127, 63);
        for ax in 0..3 {
            assert!((a[ax] + b[ax]).abs() < 1e-12);
        }
    }

    #[test]
    fn centroid_and_labels() {
        let g = Geometry::new([4, 1, 1], [1.0; 3], [0.0; 3]).unwrap();
        let l = LabelMap::from_vec(g, vec![0, 2, 2, 5]).unwrap();
        assert_eq!(l.centroid(2), Some([1.5, 0.0, 0.0]));
        assert_eq!(l.centroid(9), None);
        assert_eq!(l.labels_present(), vec![0, 2, 5]);
        assert_eq!(l.select(2).data(), &[0, 1, 1, 0]);
    }
}
