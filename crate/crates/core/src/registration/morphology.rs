use crate::error::{Error, Result};
use crate::volume::LabelMap;

/// Closing radius used for liver masks, in mm.
pub const DEFAULT_CLOSING_RADIUS_MM: f64 = 5.0;

/// Voxel offsets of a ball of physical radius `r` for the given spacing.
fn ball(r: f64, spacing: [f64; 3]) -> Vec<[isize; 3]> {
    let reach: [isize; 3] = std::array::from_fn(|a| (r / spacing[a] + 1e-9).floor() as isize);
    let mut out = Vec::new();
    for dk in -reach[2]..=reach[2] {
        for dj in -reach[1]..=reach[1] {
            for di in -reach[0]..=reach[0] {
                let d2 = (di as f64 * spacing[0]).powi(2) + (dj as f64 * spacing[1]).powi(2) + (dk as f64 * spacing[2]).powi(2);
                if d2 <= r * r * (1.0 + 1e-12) {
                    out.push([di, dj, dk]);
                }
            }
        }
    }
    out
}

fn probe(m: &[bool], dims: [usize; 3], p: [usize; 3], o: [isize; 3]) -> Option<bool> {
    let q: [isize; 3] = std::array::from_fn(|a| p[a] as isize + o[a]);
    if (0..3).any(|a| q[a] < 0 || q[a] >= dims[a] as isize) {
        return None;
    }
    Some(m[q[0] as usize + dims[0] * (q[1] as usize + dims[1] * q[2] as usize)])
}

/// Morphological closing of the nonzero voxels with a ball of `radius_mm`.
///
/// Voxels outside the grid count as background while dilating and as
/// foreground while eroding, so the result always contains the input.
pub fn close_mask(m: &LabelMap, radius_mm: f64) -> Result<LabelMap> {
    if !(radius_mm >= 0.0) || !radius_mm.is_finite() {
        return Err(Error::InvalidArgument(format!("closing radius must be >= 0, got {radius_mm}")));
    }
    let g = *m.geometry();
    let offsets = ball(radius_mm, g.spacing);
    let fg: Vec<bool> = m.data().iter().map(|&l| l != 0).collect();
    if offsets.len() <= 1 {
        return m.map(|l| u16::from(l != 0));
    }
    let dims = g.dims;
    let dilated = LabelMap::from_fn(g, |p| {
        u16::from(offsets.iter().any(|&o| probe(&fg, dims, p, o) == Some(true)))
    })?;
    let d: Vec<bool> = dilated.data().iter().map(|&l| l != 0).collect();
    LabelMap::from_fn(g, |p| {
        let idx = p[0] + dims[0] * (p[1] + dims[1] * p[2]);
        u16::from(d[idx] && offsets.iter().all(|&o| probe(&d, dims, p, o) != Some(false)))
    })
}
