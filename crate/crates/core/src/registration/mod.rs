//! Non-rigid B-spline registration by normalized gradient descent.

mod bspline;
mod morphology;
mod similarity;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::dice;
use crate::volume::{gaussian_smooth, nearest_label, LabelMap, Volume};

pub use bspline::{bspline_displace, cubic_weights, BSplineTransform, SWEEP_SPACINGS};
pub use morphology::{close_mask, DEFAULT_CLOSING_RADIUS_MM};
pub use similarity::{metric_value_and_gradient, Problem, SimilarityMetric};

/// Metric change below which an iteration counts as stalled.
pub const STALL_TOLERANCE: f64 = 1e-7;
/// Consecutive stalled iterations that end the optimization.
pub const STALL_ITERATIONS: usize = 10;

/// Which fixed-image voxels enter the metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Sampling {
    Full,
    /// A fixed random subset, drawn once per registration.
    Random { fraction: f64 },
}

impl Sampling {
    pub fn fraction(&self) -> Option<f64> {
        match *self {
            Sampling::Full => None,
            Sampling::Random { fraction } => Some(fraction),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationConfig {
    pub metric: SimilarityMetric,
    /// Histogram bins per axis, MMI only.
    pub histogram_bins: usize,
    /// Largest control-point step per iteration, in mm.
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Control-point spacing in mm.
    pub grid_spacing: f64,
    pub sampling: Sampling,
    pub sampling_seed: u64,
    /// Gaussian pre-smoothing of both images, mm; 0 registers the images as given.
    pub smoothing_sigma_mm: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            metric: SimilarityMetric::Mmi,
            histogram_bins: 50,
            learning_rate: 1.0,
            max_iterations: 300,
            grid_spacing: 50.0,
            sampling: Sampling::Full,
            sampling_seed: 0,
            smoothing_sigma_mm: 0.0,
        }
    }
}

impl RegistrationConfig {
    pub fn new(metric: SimilarityMetric, grid_spacing: f64) -> Self {
        RegistrationConfig {
            metric,
            grid_spacing,
            ..Default::default()
        }
    }

    pub fn with_sampling(mut self, fraction: f64, seed: u64) -> Self {
        self.sampling = Sampling::Random { fraction };
        self.sampling_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.histogram_bins < 2 {
            return Err(Error::Config(format!("histogram_bins must be >= 2, got {}", self.histogram_bins)));
        }
        if self.metric == SimilarityMetric::Mmi && self.histogram_bins < 6 {
            return Err(Error::Config(format!(
                "MMI needs at least 6 bins (2 padding bins per side), got {}",
                self.histogram_bins
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.max_iterations < 1 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        if !(self.grid_spacing > 0.0) || !self.grid_spacing.is_finite() {
            return Err(Error::Config(format!("grid_spacing must be > 0, got {}", self.grid_spacing)));
        }
        if !(self.smoothing_sigma_mm >= 0.0) || !self.smoothing_sigma_mm.is_finite() {
            return Err(Error::Config(format!("smoothing_sigma_mm must be >= 0, got {}", self.smoothing_sigma_mm)));
        }
        if let Some(f) = self.sampling.fraction() {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("sampling fraction must be in (0, 1], got {f}")));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let c: Self = crate::json::load_json(path)?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    /// Best transform seen, which is the one returned even when later iterates were worse.
    pub transform: BSplineTransform,
    /// Metric value at each evaluated iterate, starting with the identity.
    pub trace: Vec<f64>,
    pub converged: bool,
    /// A non-finite metric value stopped the run.
    pub diverged: bool,
    pub initial_metric: f64,
    pub final_metric: f64,
    pub wall_time_s: f64,
}

impl RegistrationResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn write_trace_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "iteration,metric")?;
        for (i, v) in self.trace.iter().enumerate() {
            writeln!(w, "{i},{v}")?;
        }
        Ok(())
    }

    pub fn save_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_trace_csv(&mut f).map_err(|e| Error::io(path, e))
    }
}

/// Register `moving` onto `fixed` starting from the identity.
pub fn register(fixed: &Volume, moving: &Volume, cfg: &RegistrationConfig) -> Result<RegistrationResult> {
    register_masked(fixed, moving, None, cfg)
}

/// As [`register`], with metric samples restricted to nonzero voxels of `fixed_mask`.
pub fn register_masked(
    fixed: &Volume,
    moving: &Volume,
    fixed_mask: Option<&LabelMap>,
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult> {
    let start = BSplineTransform::identity(fixed.geometry(), cfg.grid_spacing)?;
    optimize(fixed, moving, fixed_mask, cfg, start)
}

/// Register `moving` onto `fixed` starting from `initial`.
///
/// Each step moves the control point with the largest gradient by
/// `learning_rate` mm and the others proportionally.
pub fn register_from(
    fixed: &Volume,
    moving: &Volume,
    cfg: &RegistrationConfig,
    initial: BSplineTransform,
) -> Result<RegistrationResult> {
    optimize(fixed, moving, None, cfg, initial)
}

fn optimize(
    fixed: &Volume,
    moving: &Volume,
    fixed_mask: Option<&LabelMap>,
    cfg: &RegistrationConfig,
    initial: BSplineTransform,
) -> Result<RegistrationResult> {
    let clock = Instant::now();
    cfg.validate()?;
    let smoothed;
    let (fixed, moving) = if cfg.smoothing_sigma_mm > 0.0 {
        smoothed = (
            gaussian_smooth(fixed, cfg.smoothing_sigma_mm)?,
            gaussian_smooth(moving, cfg.smoothing_sigma_mm)?,
        );
        (&smoothed.0, &smoothed.1)
    } else {
        (fixed, moving)
    };
    let problem = Problem::with_mask(fixed, moving, fixed_mask, &initial, cfg)?;
    let mut current = initial;
    let mut best = current.clone();
    let mut best_value = f64::INFINITY;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut diverged = false;
    let mut stalled = 0usize;
    for _ in 0..cfg.max_iterations {
        let (value, grad) = problem.value_and_gradient(&current)?;
        if !value.is_finite() || grad.iter().flatten().any(|g| !g.is_finite()) {
            diverged = true;
            log::warn!("metric diverged after {} iterations", trace.len());
            break;
        }
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            stalled = if (value - prev).abs() < STALL_TOLERANCE { stalled + 1 } else { 0 };
        }
        trace.push(value);
        if value < best_value {
            best_value = value;
            best = current.clone();
        }
        if stalled >= STALL_ITERATIONS {
            converged = true;
            break;
        }
        let gmax = grad
            .iter()
            .map(|g| (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt())
            .fold(0.0, f64::max);
        if gmax < 1e-12 {
            converged = true;
            break;
        }
        let step = cfg.learning_rate / gmax;
        for (c, g) in current.coefficients.iter_mut().zip(&grad) {
            for a in 0..3 {
                c[a] -= step * g[a];
            }
        }
    }
    if trace.is_empty() {
        // the identity itself was not finite
        return Err(Error::InvalidArgument("metric is not finite at the initial transform".into()));
    }
    Ok(RegistrationResult {
        transform: best,
        initial_metric: trace[0],
        final_metric: best_value,
        trace,
        converged,
        diverged,
        wall_time_s: clock.elapsed().as_secs_f64(),
    })
}

/// `moving_mask` resampled onto the grid of `fixed_geometry` through `t` (nearest neighbour).
pub fn warp_mask(moving_mask: &LabelMap, t: &BSplineTransform, fixed_geometry: &crate::volume::Geometry) -> Result<LabelMap> {
    if !t.covers(fixed_geometry) {
        return Err(Error::InvalidArgument("transform support does not cover the fixed grid".into()));
    }
    LabelMap::from_fn(*fixed_geometry, |[i, j, k]| {
        let x = fixed_geometry.world(i, j, k);
        let d = t.displace(x).expect("covered grid");
        nearest_label(moving_mask, [x[0] + d[0], x[1] + d[1], x[2] + d[2]])
    })
}

/// Dice before and after applying a registration to the moving mask.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiceEvaluation {
    pub pre: f64,
    pub post: f64,
}

/// Dice of the moving mask against the fixed mask, without and with `t`.
pub fn evaluate_registration(t: &BSplineTransform, moving_mask: &LabelMap, fixed_mask: &LabelMap) -> Result<DiceEvaluation> {
    let g = fixed_mask.geometry();
    let identity = BSplineTransform::identity(g, t.grid_spacing)?;
    let pre = dice(&warp_mask(moving_mask, &identity, g)?, fixed_mask)?;
    let post = dice(&warp_mask(moving_mask, t, g)?, fixed_mask)?;
    Ok(DiceEvaluation { pre, post })
}
