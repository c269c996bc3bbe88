mod common;

use std::f64::consts::PI;

use beamforge::desired::AngleGrid;
use beamforge::geometry::{steering_vector, ArrayGrid};
use beamforge::pattern::{
    canonical_covariance, evaluate_pattern, evaluate_pattern_direct, sample_pattern, CanonicalKind,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{random_covariance, rel_diff};

#[test]
fn orthogonal_signals_radiate_uniformly() {
    let grid = ArrayGrid::new(10, 0.5).unwrap();
    let angles = AngleGrid::uniform(1.0).unwrap();
    let r = canonical_covariance(CanonicalKind::Orthogonal, 10, 2.0).unwrap();
    let p = sample_pattern(&r, &grid, angles.radians(), false).unwrap();
    let (lo, hi) = p
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.power), hi.max(s.power)));
    assert!(hi - lo < 1e-9);
    assert!((hi - 20.0).abs() < 1e-9);
}

#[test]
fn coherent_signals_peak_at_broadside() {
    for (m, c) in [(8, 1.0), (10, 0.5), (65, 1.0)] {
        let grid = ArrayGrid::new(m, 0.125).unwrap();
        let r = canonical_covariance(CanonicalKind::PhasedArray, m, c).unwrap();
        let a = steering_vector(&grid, 0.0).unwrap();
        assert_eq!(evaluate_pattern(&r, &a, false).unwrap(), (m * m) as f64 * c);
    }
}

#[test]
fn solid_angle_normalization_divides_by_four_pi() {
    let grid = ArrayGrid::new(6, 0.5).unwrap();
    let r = canonical_covariance(CanonicalKind::ExpDecay(0.6), 6, 1.0).unwrap();
    let a = steering_vector(&grid, 0.3).unwrap();
    let raw = evaluate_pattern(&r, &a, false).unwrap();
    let norm = evaluate_pattern(&r, &a, true).unwrap();
    assert!((norm * 4.0 * PI - raw).abs() < 1e-12 * raw);
}

#[test]
fn direct_and_quadratic_paths_agree_on_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let m = 2 + i % 14;
        let grid = ArrayGrid::new(m, 0.125 + 0.05 * (i % 5) as f64).unwrap();
        let r = random_covariance(&mut rng, m, 1 + i % m, 1.0);
        let theta = rand::Rng::gen_range(&mut rng, -PI / 2.0..=PI / 2.0);
        let a = steering_vector(&grid, theta).unwrap();
        let q = evaluate_pattern(&r, &a, false).unwrap();
        let d = evaluate_pattern_direct(&r, &grid, theta, false).unwrap();
        worst = worst.max(rel_diff(q, d));
    }
    assert!(worst < 1e-9, "worst relative gap {worst:e}");
}

#[test]
fn angles_outside_the_half_circle_are_rejected() {
    let grid = ArrayGrid::new(4, 0.5).unwrap();
    assert!(steering_vector(&grid, 2.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pattern_is_nonnegative_and_bounded(seed in any::<u64>(), m in 1usize..12, theta in -1.5f64..1.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = ArrayGrid::new(m, 0.25).unwrap();
        let r = random_covariance(&mut rng, m, m, 1.0);
        let p = evaluate_pattern(&r, &steering_vector(&grid, theta).unwrap(), false).unwrap();
        prop_assert!(p >= -1e-9);
        prop_assert!(p <= (m * m) as f64 + 1e-9);
    }

    #[test]
    fn steering_vectors_have_unit_modulus(m in 1usize..40, d in 0.05f64..1.0, theta in -1.57f64..1.57) {
        let grid = ArrayGrid::new(m, d).unwrap();
        let a = steering_vector(&grid, theta).unwrap();
        for z in a.entries().iter() {
            prop_assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn real_correlations_give_mirror_symmetric_patterns(rho in 0.0f64..0.99, m in 1usize..16, theta in 0.0f64..1.57) {
        let grid = ArrayGrid::new(m, 0.5).unwrap();
        let r = canonical_covariance(CanonicalKind::ExpDecay(rho), m, 1.0).unwrap();
        let up = evaluate_pattern(&r, &steering_vector(&grid, theta).unwrap(), false).unwrap();
        let down = evaluate_pattern(&r, &steering_vector(&grid, -theta).unwrap(), false).unwrap();
        prop_assert!((up - down).abs() <= 1e-9 * up.abs().max(1.0));
    }
}
