use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bspline::{BSplineTransform, SupportTable};
use super::RegistrationConfig;
use crate::error::{Error, Result};
use crate::volume::{Background, LabelMap, Trilinear, Volume};

/// Samples per work unit. Fixed so that partial sums, and therefore results,
/// do not depend on the number of worker threads.
const CHUNK: usize = 8192;

/// Bins left empty at each end of the Mattes histogram axes.
const PADDING: usize = 2;

/// Image similarity measure, always minimized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SimilarityMetric {
    /// Negative Mattes mutual information.
    #[serde(rename = "MMI")]
    Mmi,
    /// Negative normalized (Pearson) cross-correlation.
    #[serde(rename = "NC")]
    Nc,
    /// Mean squared intensity difference.
    #[serde(rename = "MS")]
    Ms,
}

impl SimilarityMetric {
    pub const ALL: [SimilarityMetric; 3] = [SimilarityMetric::Mmi, SimilarityMetric::Nc, SimilarityMetric::Ms];

    pub fn name(self) -> &'static str {
        match self {
            SimilarityMetric::Mmi => "MMI",
            SimilarityMetric::Nc => "NC",
            SimilarityMetric::Ms => "MS",
        }
    }

    /// Whether the measure assumes both images share an intensity scale.
    pub fn monomodal_only(self) -> bool {
        self == SimilarityMetric::Ms
    }
}

impl fmt::Display for SimilarityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MMI" => Ok(SimilarityMetric::Mmi),
            "NC" => Ok(SimilarityMetric::Nc),
            "MS" => Ok(SimilarityMetric::Ms),
            _ => Err(Error::Config(format!("unknown similarity metric '{s}'"))),
        }
    }
}

/// Cubic B-spline kernel.
#[inline]
fn bspline3(t: f64) -> f64 {
    let a = t.abs();
    if a < 1.0 {
        (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0
    } else if a < 2.0 {
        let s = 2.0 - a;
        s * s * s / 6.0
    } else {
        0.0
    }
}

#[inline]
fn bspline3_deriv(t: f64) -> f64 {
    let a = t.abs();
    if a < 1.0 {
        -2.0 * t + 1.5 * t * a
    } else if a < 2.0 {
        let s = 2.0 - a;
        -t.signum() * 0.5 * s * s
    } else {
        0.0
    }
}

/// Pairwise sum over a list of partial results, in a fixed tree shape.
fn tree_reduce<T>(mut parts: Vec<T>, add: impl Fn(T, T) -> T) -> Option<T> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(add(a, b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop()
}

fn add_vecs(mut a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

/// Mattes histogram layout shared by every evaluation of one problem.
struct MattesLayout {
    bins: usize,
    fixed_bin: Vec<usize>,
    moving_min: f64,
    moving_width: f64,
}

impl MattesLayout {
    #[inline]
    fn moving_position(&self, m: f64) -> f64 {
        (m - self.moving_min) / self.moving_width + PADDING as f64
    }
}

/// A fixed/moving pair with its sample set, ready for repeated evaluation.
pub struct Problem<'a> {
    fixed: &'a Volume,
    moving: Trilinear<'a>,
    metric: SimilarityMetric,
    samples: Vec<usize>,
    fixed_values: Vec<f64>,
    table: SupportTable,
    mattes: Option<MattesLayout>,
    template: BSplineTransform,
}

/// Moving intensity and its world-space gradient at each sample.
struct Warped {
    value: Vec<f64>,
    grad: Vec<[f64; 3]>,
}

impl<'a> Problem<'a> {
    pub fn new(fixed: &'a Volume, moving: &'a Volume, template: &BSplineTransform, cfg: &RegistrationConfig) -> Result<Self> {
        Self::with_mask(fixed, moving, None, template, cfg)
    }

    /// Only fixed voxels where `fixed_mask` is nonzero are sampled.
    pub fn with_mask(
        fixed: &'a Volume,
        moving: &'a Volume,
        fixed_mask: Option<&LabelMap>,
        template: &BSplineTransform,
        cfg: &RegistrationConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        template.validate()?;
        let g = fixed.geometry();
        let table = SupportTable::new(template, g)?;
        let candidates: Vec<usize> = match fixed_mask {
            None => (0..g.len()).collect(),
            Some(m) => {
                g.ensure_same(m.geometry(), "registration mask")?;
                (0..g.len()).filter(|&i| m.data()[i] != 0).collect()
            }
        };
        let n = candidates.len();
        if n == 0 {
            return Err(Error::EmptyMask);
        }
        let samples: Vec<usize> = match cfg.sampling.fraction() {
            None => candidates,
            Some(frac) => {
                let k = ((n as f64 * frac).round() as usize).clamp(1, n);
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.sampling_seed);
                let mut idx: Vec<usize> = sample(&mut rng, n, k).into_iter().map(|i| candidates[i]).collect();
                idx.sort_unstable();
                idx
            }
        };
        let fixed_values: Vec<f64> = samples.iter().map(|&i| fixed.data()[i] as f64).collect();
        let mattes = if cfg.metric == SimilarityMetric::Mmi {
            let bins = cfg.histogram_bins;
            let (fmin, fmax) = min_max(fixed_values.iter().copied());
            let (mmin, mmax) = min_max(moving.data().iter().map(|&v| v as f64));
            if !(fmax > fmin) || !(mmax > mmin) {
                return Err(Error::DegenerateHistogram);
            }
            let usable = (bins - 2 * PADDING) as f64;
            let fw = (fmax - fmin) / usable;
            let fixed_bin: Vec<usize> = fixed_values
                .iter()
                .map(|&f| (((f - fmin) / fw).floor() as isize + PADDING as isize).clamp(PADDING as isize, (bins - PADDING - 1) as isize) as usize)
                .collect();
            let mut occupied = vec![false; bins];
            for &b in &fixed_bin {
                occupied[b] = true;
            }
            if occupied.iter().filter(|&&o| o).count() < 2 {
                return Err(Error::DegenerateHistogram);
            }
            Some(MattesLayout {
                bins,
                fixed_bin,
                moving_min: mmin,
                moving_width: (mmax - mmin) / usable,
            })
        } else {
            None
        };
        Ok(Problem {
            fixed,
            moving: Trilinear::new(moving, Background::Clamp),
            metric: cfg.metric,
            samples,
            fixed_values,
            table,
            mattes,
            template: template.clone(),
        })
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    fn check(&self, t: &BSplineTransform) -> Result<()> {
        if t.grid_dims != self.template.grid_dims
            || t.grid_origin != self.template.grid_origin
            || t.grid_spacing != self.template.grid_spacing
        {
            return Err(Error::GeometryMismatch("transform grid differs from the problem's".into()));
        }
        t.validate()
    }

    fn warp(&self, t: &BSplineTransform) -> Warped {
        let g = self.fixed.geometry();
        let per_chunk: Vec<Vec<(f64, [f64; 3])>> = self
            .samples
            .par_chunks(CHUNK)
            .map(|chunk| {
                chunk
                    .iter()
                    .map(|&idx| {
                        let c = g.coords(idx);
                        let s = self.table.at(c);
                        let d = t.displace_with(&s);
                        let x = g.world(c[0], c[1], c[2]);
                        self.moving.sample_with_gradient([x[0] + d[0], x[1] + d[1], x[2] + d[2]])
                    })
                    .collect()
            })
            .collect();
        let mut value = Vec::with_capacity(self.samples.len());
        let mut grad = Vec::with_capacity(self.samples.len());
        for (v, gr) in per_chunk.into_iter().flatten() {
            value.push(v);
            grad.push(gr);
        }
        Warped { value, grad }
    }

    /// Scatter `dvalue/dm_i * grad m_i * basis weight` onto control points.
    fn scatter(&self, t: &BSplineTransform, w: &Warped, dm: &[f64]) -> Vec<[f64; 3]> {
        let g = self.fixed.geometry();
        let ncp = t.len();
        let parts: Vec<Vec<f64>> = (0..self.samples.len())
            .collect::<Vec<_>>()
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut acc = vec![0.0; 3 * ncp];
                for &s in chunk {
                    let ds = dm[s];
                    if ds == 0.0 {
                        continue;
                    }
                    let gm = w.grad[s];
                    let v = [ds * gm[0], ds * gm[1], ds * gm[2]];
                    let sup = self.table.at(g.coords(self.samples[s]));
                    for (c, wz) in sup[2].1.iter().enumerate() {
                        for (b, wy) in sup[1].1.iter().enumerate() {
                            let wyz = wy * wz;
                            let row = t.control_index(sup[0].0, sup[1].0 + b, sup[2].0 + c);
                            for (a, wx) in sup[0].1.iter().enumerate() {
                                let wt = wx * wyz;
                                let k = 3 * (row + a);
                                acc[k] += wt * v[0];
                                acc[k + 1] += wt * v[1];
                                acc[k + 2] += wt * v[2];
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        let flat = tree_reduce(parts, add_vecs).unwrap_or_else(|| vec![0.0; 3 * ncp]);
        flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
    }

    /// Metric value only.
    pub fn value(&self, t: &BSplineTransform) -> Result<f64> {
        Ok(self.value_and_gradient(t)?.0)
    }

    /// Metric value and its gradient with respect to every coefficient.
    pub fn value_and_gradient(&self, t: &BSplineTransform) -> Result<(f64, Vec<[f64; 3]>)> {
        self.check(t)?;
        let w = self.warp(t);
        let (value, dm) = match self.metric {
            SimilarityMetric::Ms => self.mean_squares(&w),
            SimilarityMetric::Nc => self.correlation(&w)?,
            SimilarityMetric::Mmi => self.mutual_information(&w)?,
        };
        Ok((value, self.scatter(t, &w, &dm)))
    }

    fn chunk_sums(&self, f: impl Fn(usize) -> [f64; 5] + Sync) -> [f64; 5] {
        let idx: Vec<usize> = (0..self.samples.len()).collect();
        let parts: Vec<[f64; 5]> = idx
            .par_chunks(CHUNK)
            .map(|c| {
                let mut s = [0.0; 5];
                for &i in c {
                    let v = f(i);
                    for k in 0..5 {
                        s[k] += v[k];
                    }
                }
                s
            })
            .collect();
        tree_reduce(parts, |mut a, b| {
            for k in 0..5 {
                a[k] += b[k];
            }
            a
        })
        .unwrap_or([0.0; 5])
    }

    fn mean_squares(&self, w: &Warped) -> (f64, Vec<f64>) {
        let n = self.samples.len() as f64;
        let f = &self.fixed_values;
        let s = self.chunk_sums(|i| [(w.value[i] - f[i]).powi(2), 0.0, 0.0, 0.0, 0.0]);
        let dm = (0..f.len()).map(|i| 2.0 * (w.value[i] - f[i]) / n).collect();
        (s[0] / n, dm)
    }

    fn correlation(&self, w: &Warped) -> Result<(f64, Vec<f64>)> {
        let n = self.samples.len() as f64;
        let f = &self.fixed_values;
        let m = &w.value;
        let means = self.chunk_sums(|i| [f[i], m[i], 0.0, 0.0, 0.0]);
        let (fbar, mbar) = (means[0] / n, means[1] / n);
        let s = self.chunk_sums(|i| {
            let (a, b) = (f[i] - fbar, m[i] - mbar);
            [a * a, b * b, a * b, 0.0, 0.0]
        });
        let (sff, smm, sfm) = (s[0], s[1], s[2]);
        if !(sff > 0.0) || !(smm > 0.0) {
            return Err(Error::ZeroVariance);
        }
        let root = (sff * smm).sqrt();
        let r = sfm / root;
        let dm = (0..f.len())
            .map(|i| -((f[i] - fbar) / root - r * (m[i] - mbar) / smm))
            .collect();
        Ok((-r, dm))
    }

    fn mutual_information(&self, w: &Warped) -> Result<(f64, Vec<f64>)> {
        let lay = self.mattes.as_ref().expect("mattes layout for MMI");
        let bins = lay.bins;
        let n = self.samples.len() as f64;
        let idx: Vec<usize> = (0..self.samples.len()).collect();
        let parts: Vec<Vec<f64>> = idx
            .par_chunks(CHUNK)
            .map(|c| {
                let mut h = vec![0.0; bins * bins];
                for &i in c {
                    let eta = lay.moving_position(w.value[i]);
                    let row = lay.fixed_bin[i] * bins;
                    let base = eta.floor() as isize;
                    for kappa in (base - 1).max(0)..=(base + 2).min(bins as isize - 1) {
                        h[row + kappa as usize] += bspline3(kappa as f64 - eta);
                    }
                }
                h
            })
            .collect();
        let mut joint = tree_reduce(parts, add_vecs).unwrap_or_else(|| vec![0.0; bins * bins]);
        for p in joint.iter_mut() {
            *p /= n;
        }
        let mut pf = vec![0.0; bins];
        let mut pm = vec![0.0; bins];
        for a in 0..bins {
            for b in 0..bins {
                pf[a] += joint[a * bins + b];
                pm[b] += joint[a * bins + b];
            }
        }
        let mut mi = 0.0;
        let mut log_ratio = vec![0.0; bins * bins];
        for a in 0..bins {
            for b in 0..bins {
                let p = joint[a * bins + b];
                if p > 0.0 {
                    let l = (p / (pf[a] * pm[b])).ln();
                    log_ratio[a * bins + b] = l;
                    mi += p * l;
                }
            }
        }
        if !mi.is_finite() {
            return Err(Error::DegenerateHistogram);
        }
        let scale = 1.0 / (n * lay.moving_width);
        let dm = (0..self.samples.len())
            .into_par_iter()
            .map(|i| {
                let eta = lay.moving_position(w.value[i]);
                let row = lay.fixed_bin[i] * bins;
                let base = eta.floor() as isize;
                let mut d = 0.0;
                for kappa in (base - 1).max(0)..=(base + 2).min(bins as isize - 1) {
                    d += log_ratio[row + kappa as usize] * bspline3_deriv(kappa as f64 - eta);
                }
                // d(-MI)/dm = sum L * beta'(kappa - eta) / (n * width)
                d * scale
            })
            .collect();
        Ok((-mi, dm))
    }
}

fn min_max(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

/// Value and coefficient gradient of `cfg.metric` for `moving` warped by `t` onto `fixed`.
///
/// Convenience wrapper that rebuilds the sample set on every call; use
/// [`Problem`] for repeated evaluations.
pub fn metric_value_and_gradient(
    fixed: &Volume,
    moving: &Volume,
    t: &BSplineTransform,
    cfg: &RegistrationConfig,
) -> Result<(f64, Vec<[f64; 3]>)> {
    Problem::new(fixed, moving, t, cfg)?.value_and_gradient(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_derivative_matches_differences() {
        for k in -25..=25 {
            let t = k as f64 * 0.0837;
            let h = 1e-6;
            let fd = (bspline3(t + h) - bspline3(t - h)) / (2.0 * h);
            assert!((fd - bspline3_deriv(t)).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn kernel_partition_of_unity() {
        for k in 0..10 {
            let eta = 3.0 + k as f64 * 0.1;
            let s: f64 = (0..8).map(|b| bspline3(b as f64 - eta)).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn tree_reduce_pairs() {
        let v: Vec<f64> = (1..=5).map(|x| x as f64).collect();
        assert_eq!(tree_reduce(v, |a, b| a + b), Some(15.0));
        assert_eq!(tree_reduce(Vec::<f64>::new(), |a, b| a + b), None);
    }
}
