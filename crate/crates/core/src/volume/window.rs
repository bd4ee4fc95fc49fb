use serde::{Deserialize, Serialize};

use super::Volume;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    /// `lo`/`hi` are intensities.
    Fixed,
    /// `lo`/`hi` are percentile ranks in [0, 100] over the whole volume.
    Percentile,
}

/// Intensity window applied before mapping to [-1, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub mode: WindowMode,
    pub lo: f64,
    pub hi: f64,
}

impl WindowSpec {
    pub fn fixed(lo: f64, hi: f64) -> Result<Self> {
        let w = WindowSpec {
            mode: WindowMode::Fixed,
            lo,
            hi,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn percentile(lo: f64, hi: f64) -> Result<Self> {
        let w = WindowSpec {
            mode: WindowMode::Percentile,
            lo,
            hi,
        };
        w.validate()?;
        Ok(w)
    }

    /// CT soft-tissue/bone window, HU.
    pub fn ct() -> Self {
        WindowSpec {
            mode: WindowMode::Fixed,
            lo: -1024.0,
            hi: 1500.0,
        }
    }

    pub fn cbct() -> Self {
        WindowSpec {
            mode: WindowMode::Fixed,
            lo: -1024.0,
            hi: 2000.0,
        }
    }

    /// Per-volume 10th..90th percentile window used for MRI.
    pub fn mri() -> Self {
        WindowSpec {
            mode: WindowMode::Percentile,
            lo: 10.0,
            hi: 90.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::InvalidArgument(format!(
                "window needs lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.mode == WindowMode::Percentile && (self.lo < 0.0 || self.hi > 100.0) {
            return Err(Error::InvalidArgument(format!(
                "percentile ranks must lie in [0, 100], got [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    /// Intensity bounds of this window for a given volume.
    pub fn resolve(&self, v: &Volume) -> Result<ResolvedWindow> {
        self.validate()?;
        let (lo, hi) = match self.mode {
            WindowMode::Fixed => (self.lo, self.hi),
            WindowMode::Percentile => {
                let mut sorted: Vec<f32> = v.data().to_vec();
                sorted.sort_unstable_by(f32::total_cmp);
                (
                    percentile_sorted(&sorted, self.lo) as f64,
                    percentile_sorted(&sorted, self.hi) as f64,
                )
            }
        };
        ResolvedWindow::new(lo, hi)
    }
}

/// Concrete intensity bounds mapped to -1 and +1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedWindow {
    pub lo: f64,
    pub hi: f64,
}

impl ResolvedWindow {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::DegenerateWindow { lo, hi });
        }
        Ok(ResolvedWindow { lo, hi })
    }

    #[inline]
    pub fn normalize(&self, x: f64) -> f64 {
        let c = x.clamp(self.lo, self.hi);
        if c == self.lo {
            return -1.0;
        }
        if c == self.hi {
            return 1.0;
        }
        (2.0 * (c - self.lo) / (self.hi - self.lo) - 1.0).clamp(-1.0, 1.0)
    }

    /// Inverse of [`normalize`](Self::normalize) on [-1, 1].
    #[inline]
    pub fn denormalize(&self, y: f64) -> f64 {
        self.lo + (y + 1.0) * 0.5 * (self.hi - self.lo)
    }

    /// Width of one normalized unit in native intensity.
    pub fn native_per_unit(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

fn percentile_sorted(sorted: &[f32], rank: f64) -> f32 {
    let n = sorted.len();
    let r = ((rank / 100.0) * n as f64).ceil() as usize;
    sorted[r.clamp(1, n) - 1]
}

/// Nearest-rank percentile over all voxels (rank in [0, 100]).
pub fn percentile_nearest_rank(v: &Volume, rank: f64) -> Result<f32> {
    if !(0.0..=100.0).contains(&rank) {
        return Err(Error::InvalidArgument(format!("percentile rank {rank} outside [0, 100]")));
    }
    let mut sorted: Vec<f32> = v.data().to_vec();
    sorted.sort_unstable_by(f32::total_cmp);
    Ok(percentile_sorted(&sorted, rank))
}

/// Clamp to the window and map it linearly onto [-1, 1].
pub fn window_normalize(v: &Volume, w: &WindowSpec) -> Result<(Volume, ResolvedWindow)> {
    let r = w.resolve(v)?;
    let out = v.map(|x| r.normalize(x as f64) as f32)?;
    Ok((out, r))
}
