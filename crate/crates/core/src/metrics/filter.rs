//! Small 2D filtering helpers on x-fastest slices.

/// Half-sample symmetric reflection of an out-of-range index (`d c b a | a b c d`).
#[inline]
pub(crate) fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Normalized 1D Gaussian taps for offsets `-radius..=radius`.
pub(crate) fn gaussian_taps(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let w: Vec<f64> = (-r..=r)
        .map(|t| (-((t * t) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Separable correlation with symmetric taps and reflect padding; output has the input size.
pub(crate) fn separable(img: &[f64], nx: usize, ny: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; nx * ny];
    for j in 0..ny {
        let row = &img[j * nx..(j + 1) * nx];
        for i in 0..nx {
            let mut acc = 0.0;
            for (t, &w) in taps.iter().enumerate() {
                acc += w * row[reflect(i as isize + t as isize - r, nx)];
            }
            tmp[j * nx + i] = acc;
        }
    }
    let mut out = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let mut acc = 0.0;
            for (t, &w) in taps.iter().enumerate() {
                acc += w * tmp[reflect(j as isize + t as isize - r, ny) * nx + i];
            }
            out[j * nx + i] = acc;
        }
    }
    out
}

pub(crate) fn slice_f64(data: &[f32], k: usize, plane: usize) -> Vec<f64> {
    data[k * plane..(k + 1) * plane].iter().map(|&v| v as f64).collect()
}
