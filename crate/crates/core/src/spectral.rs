//! 2D FFT on x-fastest slices.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft2 {
    nx: usize,
    ny: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub(crate) fn new(nx: usize, ny: usize) -> Self {
        let mut p = FftPlanner::new();
        Fft2 {
            nx,
            ny,
            row_fwd: p.plan_fft_forward(nx),
            col_fwd: p.plan_fft_forward(ny),
            row_inv: p.plan_fft_inverse(nx),
            col_inv: p.plan_fft_inverse(ny),
        }
    }

    /// Unnormalized forward transform in place.
    pub(crate) fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform in place, scaled by `1 / (nx * ny)`.
    pub(crate) fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_inv, &self.col_inv);
        let s = 1.0 / (self.nx * self.ny) as f64;
        for v in buf.iter_mut() {
            *v *= s;
        }
    }

    fn run(&self, buf: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(buf.len(), self.nx * self.ny);
        rows.process(buf);
        let mut col = vec![Complex64::new(0.0, 0.0); self.ny];
        for i in 0..self.nx {
            for j in 0..self.ny {
                col[j] = buf[i + self.nx * j];
            }
            cols.process(&mut col);
            for j in 0..self.ny {
                buf[i + self.nx * j] = col[j];
            }
        }
    }
}

/// Signed FFT frequency index of bin `k` out of `n`.
#[inline]
pub(crate) fn freq_index(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}
