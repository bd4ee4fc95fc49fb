mod common;

use common::smooth_volume;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use synthreg::metrics::{
    dice, edge_ratios, edge_ratios_from_maps, fsim, hist_cc, mae, mean_absolute_deviation, ncc, noise_magnitude,
    radial_nps, ssim, Histogram, MetricReport, RadialNps,
};
use synthreg::modality::{add_textured_noise, NoiseSpec};
use synthreg::volume::{gaussian_smooth, Geometry, LabelMap, Volume};
use synthreg::Error;

fn cube(n: usize) -> Geometry {
    Geometry::centered([n; 3], [1.0; 3]).unwrap()
}

fn gaussian_volume(g: Geometry, mean: f64, sigma: f64, seed: u64) -> Volume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(mean, sigma).unwrap();
    Volume::from_vec(g, (0..g.len()).map(|_| d.sample(&mut rng) as f32).collect()).unwrap()
}

/// Unit-variance smooth structure scaled into roughly [-0.8, 0.8].
fn structured(n: usize, nz: usize, seed: u64) -> Volume {
    let v = smooth_volume(n.max(nz), seed);
    let g = Geometry::centered([n, n, nz], [1.0; 3]).unwrap();
    let peak = v.data().iter().fold(0.0f32, |m, x| m.max(x.abs())).max(1e-6);
    Volume::from_fn(g, |[i, j, k]| 0.8 * v.get(i, j, k) / peak).unwrap()
}

fn nps_roi(nz: usize) -> LabelMap {
    LabelMap::filled(Geometry::centered([160, 160, nz], [1.0; 3]).unwrap(), 1).unwrap()
}

#[test]
fn mae_matches_direct_loop_and_constant_offset() {
    let g = cube(12);
    let a = gaussian_volume(g, 0.0, 100.0, 1);
    let b = gaussian_volume(g, 0.0, 100.0, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mask = LabelMap::from_vec(g, (0..g.len()).map(|_| rng.gen_range(0..3u16)).collect()).unwrap();
    let mut sum = 0.0;
    let mut n = 0;
    for idx in 0..g.len() {
        if mask.data()[idx] != 0 {
            sum += (a.data()[idx] as f64 - b.data()[idx] as f64).abs();
            n += 1;
        }
    }
    assert!((mae(&a, &b, &mask).unwrap() - sum / n as f64).abs() < 1e-6);
    let shifted = a.map(|x| x + 51.0).unwrap();
    assert!((mae(&a, &shifted, &mask).unwrap() - 51.0).abs() < 1e-4);
    assert_eq!(mae(&a, &a, &mask).unwrap(), 0.0);
    let empty = LabelMap::filled(g, 0).unwrap();
    assert!(matches!(mae(&a, &b, &empty), Err(Error::EmptyMask)));
}

#[test]
fn ssim_falls_under_heavy_noise_and_flips_sign_when_negated() {
    let a = structured(48, 6, 11);
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    let noise = gaussian_volume(*a.geometry(), 0.0, 0.5, 12);
    let noisy = Volume::from_vec(*a.geometry(), a.data().iter().zip(noise.data()).map(|(x, e)| x + e).collect()).unwrap();
    assert!(ssim(&a, &noisy).unwrap() < 0.5);
    // a pixel checkerboard has zero mean in every window, not just globally
    let fine = Volume::from_fn(*a.geometry(), |[i, j, _]| if (i + j) % 2 == 0 { 0.3 } else { -0.3 }).unwrap();
    let negated = fine.map(|x| -x).unwrap();
    assert!(ssim(&fine, &negated).unwrap() < 0.0);
}

#[test]
fn fsim_prefers_light_blur_and_tolerates_contrast_change() {
    let a = structured(48, 4, 21);
    let light = gaussian_smooth(&a, 1.0).unwrap();
    let heavy = gaussian_smooth(&a, 4.0).unwrap();
    assert!((fsim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    assert!(fsim(&a, &heavy).unwrap() < fsim(&a, &light).unwrap());

    let g = Geometry::centered([64, 64, 2], [1.0; 3]).unwrap();
    let board = |amp: f32| Volume::from_fn(g, |[i, j, _]| if (i / 8 + j / 8) % 2 == 0 { amp } else { -amp }).unwrap();
    // soft-tissue contrast; near full-range steps the gradient term alone caps fsim at 0.8
    let f = fsim(&board(0.02), &board(0.01)).unwrap();
    assert!(f > 0.9, "checkerboard fsim {f}");
}

#[test]
fn edge_ratios_identity_blank_and_doubling() {
    let g = Geometry::centered([64, 64, 3], [1.0; 3]).unwrap();
    let square = |x0: usize| {
        Volume::from_fn(g, move |[i, j, _]| if (x0..x0 + 16).contains(&i) && (24..40).contains(&j) { 0.8 } else { -0.8 })
            .unwrap()
    };
    let a = square(6);
    let (epr, egr) = edge_ratios(&a, &a).unwrap();
    assert_eq!((epr, egr), (1.0, 0.0));
    let blank = Volume::filled(g, -0.8).unwrap();
    assert_eq!(edge_ratios(&a, &blank).unwrap().0, 0.0);
    assert!(matches!(edge_ratios(&blank, &a), Err(Error::NoEdgesInReference)));

    // a second, congruent square far from the first doubles the edge count
    let both = Volume::from_vec(g, a.data().iter().zip(square(40).data()).map(|(x, y)| x.max(*y)).collect()).unwrap();
    let (epr, egr) = edge_ratios(&a, &both).unwrap();
    assert_eq!(epr, 1.0);
    assert!((egr - 1.0).abs() < 0.1, "egr {egr}");
}

#[test]
fn constructed_edge_maps_give_exact_ratios() {
    let (nx, ny) = (20, 20);
    let mut reference = vec![false; nx * ny];
    let mut candidate = vec![false; nx * ny];
    for i in 2..8 {
        reference[5 * nx + i] = true;
        candidate[5 * nx + i] = true;
        candidate[15 * nx + i + 10] = true;
    }
    assert_eq!(edge_ratios_from_maps(&reference, &candidate, nx, ny).unwrap(), (1.0, 1.0));
}

#[test]
fn white_noise_nps_is_flat() {
    let roi = nps_roi(8);
    let v = gaussian_volume(*roi.geometry(), 0.0, 10.0, 31);
    let nps = radial_nps(&v, &roi, 1, 32).unwrap();
    assert!(nps.patches >= 200);
    let mean = nps.power.iter().sum::<f64>() / nps.power.len() as f64;
    let worst = nps.power.iter().map(|p| (p - mean).abs() / mean).fold(0.0, f64::max);
    assert!(worst < 0.15, "largest deviation {worst}");
}

#[test]
fn constant_roi_has_no_noise_power() {
    let roi = nps_roi(2);
    let v = Volume::filled(*roi.geometry(), 0.3).unwrap();
    assert!(radial_nps(&v, &roi, 1, 32).unwrap().power.iter().all(|&p| p < 1e-10));
    assert!(matches!(radial_nps(&v, &roi, 1, 200), Err(Error::RoiTooSmall { .. })));
}

#[test]
fn band_limited_noise_has_little_power_above_cutoff() {
    // sum of sinusoids on the 32-pixel patch lattice with |k| <= 6
    let roi = nps_roi(8);
    let g = *roi.geometry();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let waves: Vec<(f64, f64, f64, f64)> = (0..60)
        .filter_map(|_| {
            let (kx, ky) = (rng.gen_range(-6i32..=6), rng.gen_range(-6i32..=6));
            let amp = rng.gen_range(0.5..1.5);
            let phase_per_slice = rng.gen_range(0.0..std::f64::consts::TAU);
            ((kx * kx + ky * ky) as f64 <= 36.0 && (kx, ky) != (0, 0))
                .then_some((kx as f64 / 32.0, ky as f64 / 32.0, amp, phase_per_slice))
        })
        .collect();
    let v = Volume::from_fn(g, |[i, j, k]| {
        waves
            .iter()
            .map(|&(fx, fy, a, p)| a * (std::f64::consts::TAU * (fx * i as f64 + fy * j as f64) + p * (k + 1) as f64).sin())
            .sum::<f64>() as f32
    })
    .unwrap();
    let nps = radial_nps(&v, &roi, 1, 32).unwrap();
    let peak = nps.power.iter().cloned().fold(0.0, f64::max);
    let cutoff = 6.0 / 32.0;
    for (&f, &p) in nps.bin_centers.iter().zip(&nps.power) {
        // two bins of transition band for the plane fit
        if f > cutoff + 2.0 / 32.0 {
            assert!(p < 0.05 * peak, "f={f}: {p} vs peak {peak}");
        }
    }
}

#[test]
fn ncc_of_two_texture_estimates_is_high() {
    let roi = nps_roi(8);
    let zero = Volume::filled(*roi.geometry(), 0.0).unwrap();
    let spec = NoiseSpec::textured(39.0, 0.08);
    let a = radial_nps(&add_textured_noise(&zero, &roi, 1, &spec, 1).unwrap(), &roi, 1, 32).unwrap();
    let b = radial_nps(&add_textured_noise(&zero, &roi, 1, &spec, 2).unwrap(), &roi, 1, 32).unwrap();
    let r = ncc(&a, &b).unwrap();
    assert!(r >= 0.95, "ncc {r}");
    assert!((ncc(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    let doubled = RadialNps {
        power: a.power.iter().map(|p| 2.0 * p).collect(),
        ..a.clone()
    };
    assert!((ncc(&a, &doubled).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn noise_magnitude_and_mad_ratio_for_gaussian_noise() {
    let g = cube(50);
    let roi = LabelMap::filled(g, 2).unwrap();
    let v = gaussian_volume(g, 60.0, 39.0, 51);
    let nm = noise_magnitude(&v, &roi, 2).unwrap();
    assert!((nm / 39.0 - 1.0).abs() < 0.02, "nm {nm}");
    let ratio = mean_absolute_deviation(&v, &roi, 2).unwrap() / nm;
    assert!((ratio - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.02 * 0.798, "ratio {ratio}");
    assert_eq!(noise_magnitude(&Volume::filled(g, 5.0).unwrap(), &roi, 2).unwrap(), 0.0);
}

#[test]
fn disjoint_spikes_correlate_at_minus_one_over_63() {
    let g = cube(4);
    let a = Volume::filled(g, 0.1).unwrap();
    let b = Volume::filled(g, 0.9).unwrap();
    let ha = Histogram::uniform(&a, 0.0, 1.0, 64).unwrap();
    let hb = Histogram::uniform(&b, 0.0, 1.0, 64).unwrap();
    assert!((hist_cc(&ha, &hb).unwrap() + 1.0 / 63.0).abs() < 1e-12);
    assert!((hist_cc(&ha, &ha).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn histogram_cc_ignores_sample_count() {
    let small = gaussian_volume(cube(10), 0.0, 0.3, 61);
    let g2 = Geometry::centered([10, 10, 20], [1.0; 3]).unwrap();
    let twice = Volume::from_vec(g2, [small.data(), small.data()].concat()).unwrap();
    let h1 = Histogram::uniform(&small, -1.0, 1.0, 64).unwrap();
    let h2 = Histogram::uniform(&twice, -1.0, 1.0, 64).unwrap();
    assert!((hist_cc(&h1, &h2).unwrap() - 1.0).abs() < 1e-12);
    let other = Histogram::uniform(&small, -1.0, 1.0, 32).unwrap();
    assert!(matches!(hist_cc(&h1, &other), Err(Error::EdgeMismatch)));
}

#[test]
fn dice_closed_forms() {
    let g = Geometry::centered([150, 1, 1], [1.0; 3]).unwrap();
    let a = LabelMap::from_fn(g, |[i, _, _]| (i < 100) as u16).unwrap();
    let b = LabelMap::from_fn(g, |[i, _, _]| (i >= 50) as u16).unwrap();
    assert_eq!(dice(&a, &b).unwrap(), 0.5);
    assert_eq!(dice(&a, &a).unwrap(), 1.0);
    let c = LabelMap::from_fn(g, |[i, _, _]| (i >= 100) as u16).unwrap();
    assert_eq!(dice(&a, &c).unwrap(), 0.0);
}

#[test]
fn report_rejects_values_outside_metric_ranges() {
    let mut r = MetricReport::new();
    r.insert("v", "ssim", 0.5).unwrap();
    assert!(r.insert("v", "dice", 1.5).is_err());
    assert!(r.insert("v", "mae", f64::NAN).is_err());
    assert_eq!(r.get("v", "ssim"), Some(0.5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn self_comparison_identities(seed in 0u64..10_000) {
        let a = structured(24, 3, seed);
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() <= 1e-9);
        prop_assert!((fsim(&a, &a).unwrap() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn mae_and_dice_are_symmetric(seed in 0u64..10_000) {
        let g = cube(8);
        let a = gaussian_volume(g, 0.0, 1.0, seed);
        let b = gaussian_volume(g, 0.0, 1.0, seed + 1);
        let m = LabelMap::from_vec(g, a.data().iter().map(|&x| (x > 0.0) as u16).collect()).unwrap();
        let n = LabelMap::from_vec(g, b.data().iter().map(|&x| (x > 0.2) as u16).collect()).unwrap();
        prop_assert_eq!(mae(&a, &b, &m).unwrap(), mae(&b, &a, &m).unwrap());
        prop_assert_eq!(dice(&m, &n).unwrap(), dice(&n, &m).unwrap());
    }

    #[test]
    fn correlations_ignore_positive_scaling(scale in 0.01f64..100.0, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let power: Vec<f64> = (0..12).map(|_| rng.gen_range(0.1..5.0)).collect();
        let p = RadialNps { bin_centers: (1..=12).map(|k| k as f64 * 0.03).collect(), power, roi_voxels: 1, patches: 1 };
        let q = RadialNps { power: p.power.iter().map(|x| x * scale + 0.0).collect(), ..p.clone() };
        let r = ncc(&p, &q).unwrap();
        prop_assert!((r - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn epr_bounded_egr_non_negative(seed in 0u64..1000) {
        let a = structured(32, 2, seed);
        let b = structured(32, 2, seed + 7);
        let (epr, egr) = edge_ratios(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&epr));
        prop_assert!(egr >= 0.0);
    }
}
