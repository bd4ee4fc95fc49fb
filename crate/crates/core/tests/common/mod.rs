#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synthreg::registration::{BSplineTransform, Problem, RegistrationConfig, SimilarityMetric};
use synthreg::volume::{Geometry, Volume};

/// Sum of random Gaussian blobs on a cube grid with unit spacing.
pub fn smooth_volume(n: usize, seed: u64) -> Volume {
    let g = Geometry::centered([n; 3], [1.0; 3]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = n as f64 / 2.0;
    let blobs: Vec<([f64; 3], f64, f64)> = (0..6)
        .map(|_| {
            let c = [0, 1, 2].map(|_| rng.gen_range(-half..half));
            (c, rng.gen_range(4.0..7.0), rng.gen_range(-1.0..1.0))
        })
        .collect();
    Volume::from_fn(g, |[i, j, k]| {
        let p = g.world(i, j, k);
        let v: f64 = blobs
            .iter()
            .map(|(c, s, a)| {
                let d2: f64 = (0..3).map(|x| (p[x] - c[x]).powi(2)).sum();
                a * (-d2 / (2.0 * s * s)).exp()
            })
            .sum();
        v as f32
    })
    .unwrap()
}

pub fn random_transform(g: &Geometry, spacing: f64, amplitude: f64, seed: u64) -> BSplineTransform {
    let mut t = BSplineTransform::identity(g, spacing).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for c in t.coefficients.iter_mut() {
        *c = [0, 1, 2].map(|_| rng.gen_range(-amplitude..amplitude));
    }
    t
}

/// Largest deviation of the analytic gradient from central differences,
/// relative to the largest finite-difference component.
pub fn max_relative_fd_error(metric: SimilarityMetric, seed: u64) -> f64 {
    let f = smooth_volume(16, 100 + seed);
    let m = smooth_volume(16, 200 + seed);
    let m = if metric == SimilarityMetric::Ms { m } else { m.map(|v| (2.0 * v).tanh()).unwrap() };
    let mut cfg = RegistrationConfig::new(metric, 8.0);
    // 4096 samples populate a 20x20 joint histogram reasonably densely
    cfg.histogram_bins = 20;
    let t = random_transform(f.geometry(), 8.0, 1.5, seed);
    let problem = Problem::new(&f, &m, &t, &cfg).unwrap();
    let (_, grad) = problem.value_and_gradient(&t).unwrap();
    let h = 1e-3;
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    let mut fd = vec![[0.0; 3]; t.len()];
    for q in 0..t.len() {
        for a in 0..3 {
            let mut tp = t.clone();
            tp.coefficients[q][a] += h;
            let mut tm = t.clone();
            tm.coefficients[q][a] -= h;
            fd[q][a] = (problem.value(&tp).unwrap() - problem.value(&tm).unwrap()) / (2.0 * h);
            scale = scale.max(fd[q][a].abs());
        }
    }
    for q in 0..t.len() {
        for a in 0..3 {
            worst = worst.max((grad[q][a] - fd[q][a]).abs());
        }
    }
    worst / scale
}

/// Per-pixel L1 averaged over the image.
pub fn l1_oracle(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..a.len() {
        for c in 0..a[r].len() {
            total += (b[r][c] - a[r][c]).abs();
            count += 1;
        }
    }
    total / count as f64
}

/// Sum over pixels with an upper and a left neighbour, divided by their count.
pub fn gdl_oracle(x: &[Vec<f64>], g: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 1..x.len() {
        for c in 1..x[r].len() {
            let row_term = ((x[r][c] - x[r - 1][c]).abs() - (g[r][c] - g[r - 1][c]).abs()).abs();
            let col_term = ((x[r][c] - x[r][c - 1]).abs() - (g[r][c] - g[r][c - 1]).abs()).abs();
            total += row_term.powi(2) + col_term.powi(2);
            count += 1;
        }
    }
    total / count as f64
}

pub fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<Vec<f64>> {
    (0..h).map(|_| (0..w).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}
