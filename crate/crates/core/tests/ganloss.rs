mod common;

use common::{gdl_oracle, l1_oracle, random_image};
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use synthreg::ganloss::{gradient_difference_loss, intensity_loss, total_generator_loss, ImagePair, LossWeights};

fn to_array(rows: &[Vec<f64>]) -> Array2<f64> {
    let (h, w) = (rows.len(), rows[0].len());
    Array2::from_shape_fn((h, w), |(i, j)| rows[i][j])
}

fn pair(a: &[Vec<f64>], b: &[Vec<f64>]) -> ImagePair {
    ImagePair::new(to_array(a), to_array(b)).unwrap()
}

#[test]
fn losses_match_double_loop_oracles_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..50 {
        let (x, gx, y, fy) = (
            random_image(&mut rng, 8, 8),
            random_image(&mut rng, 8, 8),
            random_image(&mut rng, 8, 8),
            random_image(&mut rng, 8, 8),
        );
        let (p, q) = (pair(&x, &gx), pair(&y, &fy));
        let int = intensity_loss(&p, &q).unwrap();
        assert!((int - (l1_oracle(&x, &gx) + l1_oracle(&y, &fy))).abs() <= 1e-6);
        assert!((gradient_difference_loss(&p).unwrap() - gdl_oracle(&x, &gx)).abs() <= 1e-6);
        assert!((gradient_difference_loss(&q).unwrap() - gdl_oracle(&y, &fy)).abs() <= 1e-6);
    }
}

#[test]
fn weighted_totals() {
    assert_eq!(total_generator_loss(1.0, 2.0, 3.0, 4.0, 4.0, &LossWeights::ct()), 91.0);
    assert_eq!(total_generator_loss(1.0, 2.0, 3.0, 4.0, 4.0, &LossWeights::mri()), 25.4);
    assert_eq!(total_generator_loss(0.0, 0.0, 0.0, 0.0, 0.0, &LossWeights::ct()), 0.0);
}

#[test]
fn unit_offset_and_identity() {
    let zeros = vec![vec![0.0; 6]; 5];
    let ones = vec![vec![1.0; 6]; 5];
    let same = pair(&zeros, &zeros);
    assert_eq!(intensity_loss(&pair(&zeros, &ones), &same).unwrap(), 1.0);
    assert_eq!(intensity_loss(&same, &same).unwrap(), 0.0);
    assert_eq!(gradient_difference_loss(&same).unwrap(), 0.0);
}

#[test]
fn ramp_plus_constant_has_no_gdl() {
    let ramp: Vec<Vec<f64>> = (0..7).map(|r| (0..9).map(|c| 0.3 * r as f64 - 0.1 * c as f64).collect()).collect();
    let shifted: Vec<Vec<f64>> = ramp.iter().map(|row| row.iter().map(|v| v + 2.5).collect()).collect();
    assert!(gradient_difference_loss(&pair(&ramp, &shifted)).unwrap().abs() < 1e-12);
}

#[test]
fn mismatched_and_tiny_inputs_are_rejected() {
    assert!(ImagePair::new(Array2::zeros((3, 3)), Array2::zeros((3, 4))).is_err());
    let thin = ImagePair::new(Array2::zeros((1, 4)), Array2::zeros((1, 4))).unwrap();
    assert!(gradient_difference_loss(&thin).is_err());
    assert!(LossWeights::new(10.0, -1.0, 5.0).is_err());
}

fn image_strategy(h: usize, w: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, w), h)
}

proptest! {
    #[test]
    fn losses_are_non_negative_and_symmetric(
        x in image_strategy(5, 6), gx in image_strategy(5, 6),
        y in image_strategy(5, 6), fy in image_strategy(5, 6),
    ) {
        let (p, q) = (pair(&x, &gx), pair(&y, &fy));
        let a = intensity_loss(&p, &q).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - intensity_loss(&q, &p).unwrap()).abs() <= 1e-12);
        prop_assert!(gradient_difference_loss(&p).unwrap() >= 0.0);
    }

    #[test]
    fn gdl_ignores_common_offset(x in image_strategy(6, 6), gx in image_strategy(6, 6), c in -5.0f64..5.0) {
        let shift = |m: &Vec<Vec<f64>>| m.iter().map(|r| r.iter().map(|v| v + c).collect()).collect::<Vec<Vec<f64>>>();
        let base = gradient_difference_loss(&pair(&x, &gx)).unwrap();
        let moved = gradient_difference_loss(&pair(&shift(&x), &shift(&gx))).unwrap();
        prop_assert!((base - moved).abs() <= 1e-9 * (1.0 + base));
    }

    #[test]
    fn total_is_linear_in_each_weight(
        terms in prop::array::uniform5(0.0f64..10.0),
        w in prop::array::uniform3(0.0f64..20.0),
        k in 0.0f64..4.0,
    ) {
        let [adv, cyc, int, gf, gb] = terms;
        let at = |a: f64, b: f64, c: f64| {
            total_generator_loss(adv, cyc, int, gf, gb, &LossWeights::new(a, b, c).unwrap())
        };
        let base = at(w[0], w[1], w[2]);
        let tol = 1e-9 * (1.0 + base.abs());
        prop_assert!((at(w[0] + k, w[1], w[2]) - base - k * cyc).abs() <= tol * 10.0);
        prop_assert!((at(w[0], w[1] + k, w[2]) - base - k * int).abs() <= tol * 10.0);
        prop_assert!((at(w[0], w[1], w[2] + k) - base - k * (gf + gb)).abs() <= tol * 10.0);
    }
}
