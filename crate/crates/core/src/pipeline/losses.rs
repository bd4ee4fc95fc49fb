use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ganloss::{gradient_difference_loss, intensity_loss, total_generator_loss, ImagePair, LossWeights};
use crate::volume::{read_rvol_file, Volume};

/// Loss terms between axial slices of four RVOL volumes:
/// `x` and its translation `gx`, `y` and its translation `fy`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossesConfig {
    pub x: PathBuf,
    pub gx: PathBuf,
    pub y: PathBuf,
    pub fy: PathBuf,
    /// Axial slice index; the middle slice when absent.
    #[serde(default)]
    pub slice: Option<usize>,
    /// Externally computed adversarial and cycle terms.
    #[serde(default)]
    pub adversarial: f64,
    #[serde(default)]
    pub cycle: f64,
    #[serde(default = "LossWeights::ct")]
    pub weights: LossWeights,
}

impl LossesConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::json::load_json(path)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub slice: usize,
    pub intensity: f64,
    pub gdl_forward: f64,
    pub gdl_backward: f64,
    pub total: f64,
}

fn slice_array(v: &Volume, k: usize) -> Result<Array2<f64>> {
    let [nx, ny, nz] = v.dims();
    if k >= nz {
        return Err(Error::InvalidArgument(format!("slice {k} outside 0..{nz}")));
    }
    let s = v.axial_slice(k).iter().map(|&x| x as f64).collect();
    // rows run along y, columns along x
    Array2::from_shape_vec((ny, nx), s).map_err(|e| Error::ShapeMismatch(e.to_string()))
}

pub fn cmd_losses(cfg: &LossesConfig) -> Result<LossReport> {
    let load = |p: &PathBuf| -> Result<Volume> { read_rvol_file(p) };
    let (x, gx, y, fy) = (load(&cfg.x)?, load(&cfg.gx)?, load(&cfg.y)?, load(&cfg.fy)?);
    let slice = cfg.slice.unwrap_or(x.dims()[2] / 2);
    let fwd = ImagePair::new(slice_array(&x, slice)?, slice_array(&gx, slice)?)?;
    let bwd = ImagePair::new(slice_array(&y, slice)?, slice_array(&fy, slice)?)?;
    let intensity = intensity_loss(&fwd, &bwd)?;
    let gdl_forward = gradient_difference_loss(&fwd)?;
    let gdl_backward = gradient_difference_loss(&bwd)?;
    Ok(LossReport {
        slice,
        intensity,
        gdl_forward,
        gdl_backward,
        total: total_generator_loss(cfg.adversarial, cfg.cycle, intensity, gdl_forward, gdl_backward, &cfg.weights),
    })
}
