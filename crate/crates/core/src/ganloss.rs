//! Generator loss terms of a cycle-consistent image translation model.
//!
//! Only the closed-form terms are computed here; adversarial and cycle
//! losses come from outside and are combined by [`total_generator_loss`].
//! Both image losses are mean-reduced so their size does not depend on the
//! patch size.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An input image and its mapping through one generator.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePair {
    pub x: Array2<f64>,
    pub gx: Array2<f64>,
}

impl ImagePair {
    pub fn new(x: Array2<f64>, gx: Array2<f64>) -> Result<Self> {
        let p = ImagePair { x, gx };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.dim() != self.gx.dim() {
            return Err(Error::ShapeMismatch(format!(
                "pair members {:?} vs {:?}",
                self.x.dim(),
                self.gx.dim()
            )));
        }
        if self.x.iter().chain(self.gx.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("image pair holds non-finite values".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_cyc: f64,
    pub lambda_int: f64,
    pub lambda_gdl: f64,
}

impl LossWeights {
    pub fn new(lambda_cyc: f64, lambda_int: f64, lambda_gdl: f64) -> Result<Self> {
        let w = LossWeights {
            lambda_cyc,
            lambda_int,
            lambda_gdl,
        };
        if [lambda_cyc, lambda_int, lambda_gdl].iter().all(|&l| l >= 0.0 && l.is_finite()) {
            Ok(w)
        } else {
            Err(Error::InvalidArgument(format!("loss weights must be >= 0, got {w:?}")))
        }
    }

    /// 10 / 10 / 5, used for CT and CBCT.
    pub fn ct() -> Self {
        LossWeights {
            lambda_cyc: 10.0,
            lambda_int: 10.0,
            lambda_gdl: 5.0,
        }
    }

    /// 10 / 0.4 / 0.4, used for MRI.
    pub fn mri() -> Self {
        LossWeights {
            lambda_cyc: 10.0,
            lambda_int: 0.4,
            lambda_gdl: 0.4,
        }
    }
}

fn mean_abs_diff(p: &ImagePair) -> f64 {
    let n = p.x.len() as f64;
    Zip::from(&p.x).and(&p.gx).fold(0.0, |acc, a, b| acc + (a - b).abs()) / n
}

/// `mean|G(x) - x| + mean|F(y) - y|`.
pub fn intensity_loss(p: &ImagePair, q: &ImagePair) -> Result<f64> {
    p.validate()?;
    q.validate()?;
    if p.x.is_empty() || q.x.is_empty() {
        return Err(Error::ShapeMismatch("empty image".into()));
    }
    Ok(mean_abs_diff(p) + mean_abs_diff(q))
}

/// Squared mismatch of absolute backward differences along both axes,
/// averaged over the `(rows - 1) * (cols - 1)` positions with both neighbours.
pub fn gradient_difference_loss(p: &ImagePair) -> Result<f64> {
    p.validate()?;
    let (h, w) = p.x.dim();
    if h < 2 || w < 2 {
        return Err(Error::ShapeMismatch(format!("need at least 2x2 pixels, got {h}x{w}")));
    }
    let (x, g) = (&p.x, &p.gx);
    let mut sum = 0.0;
    for i in 1..h {
        for j in 1..w {
            let di = (x[[i, j]] - x[[i - 1, j]]).abs() - (g[[i, j]] - g[[i - 1, j]]).abs();
            let dj = (x[[i, j]] - x[[i, j - 1]]).abs() - (g[[i, j]] - g[[i, j - 1]]).abs();
            sum += di * di + dj * dj;
        }
    }
    Ok(sum / ((h - 1) * (w - 1)) as f64)
}

/// `adv + l_cyc * cyc + l_int * int + l_gdl * (gdl_fwd + gdl_bwd)`.
pub fn total_generator_loss(adv: f64, cyc: f64, int_: f64, gdl_fwd: f64, gdl_bwd: f64, w: &LossWeights) -> f64 {
    adv + w.lambda_cyc * cyc + w.lambda_int * int_ + w.lambda_gdl * (gdl_fwd + gdl_bwd)
}
