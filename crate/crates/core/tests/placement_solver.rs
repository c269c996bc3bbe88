mod common;

use beamforge::covariance::solve_covariance;
use beamforge::desired::MainlobeSpec;
use beamforge::driver::{uniform_placement, DriverConfig};
use beamforge::oracle::exhaustive_search;
use beamforge::pattern::{canonical_covariance, CanonicalKind};
use beamforge::placement::{
    admm_solve, build_couplings, quartic_objective, round_placement, split_objective, LiftedPoint,
};
use beamforge::qp::{project_capped_simplex, solve_active_set, solve_projected_gradient, LiftedSet};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::random_covariance;

fn random_qp<R: Rng>(rng: &mut R, d: usize) -> (DMatrix<f64>, DVector<f64>) {
    let b = DMatrix::from_fn(d, d + 2, |_, _| rng.gen_range(-1.0..1.0));
    let mut h = &b * b.transpose();
    for i in 0..d {
        h[(i, i)] += rng.gen_range(0.05..1.0);
    }
    let v = DVector::from_fn(d, |_, _| rng.gen_range(-3.0..3.0));
    (h, v)
}

#[test]
fn active_set_matches_projected_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 0.0;
    for trial in 0..40 {
        let m = 3 + trial % 10;
        let n = 1 + trial % m;
        let set = LiftedSet::new(m, n).unwrap();
        let (h, v) = random_qp(&mut rng, set.dim());
        let start = set.project(&DVector::from_fn(set.dim(), |_, _| rng.gen_range(0.0..1.0)));
        let kkt = solve_active_set(&h, &v, &start, &set).unwrap();
        let pg = solve_projected_gradient(&h, &v, &start, &set, 1e-14, 2_000_000).unwrap();
        assert!(set.violation(&kkt.x) < 1e-10);
        worst = worst.max((&kkt.x - &pg.x).amax());
    }
    assert!(worst < 1e-6, "largest disagreement {worst:e}");
}

#[test]
fn split_objective_on_the_diagonal_is_the_quartic() {
    let cfg = DriverConfig::standard().with_grid_points(20);
    let grid = cfg.array_grid().unwrap();
    let desired = cfg.desired().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let r = random_covariance(&mut rng, 20, 5, 1.0);
        let couplings = build_couplings(&r, &desired, &grid).unwrap();
        let g: Vec<f64> = (0..20).map(|_| rng.gen_range(0.0..1.0)).collect();
        let x = LiftedPoint {
            scale_root: rng.gen_range(0.0..3.0),
            placement: g,
        }
        .to_vector();
        let f = split_objective(&couplings, &x, &x);
        let q = quartic_objective(&couplings, &x);
        assert!((f - q).abs() <= 1e-12 * q.abs().max(1.0), "{f} vs {q}");
    }
}

#[test]
fn quartic_at_a_boolean_point_is_the_matching_cost() {
    let cfg = DriverConfig::standard();
    let grid = cfg.array_grid().unwrap();
    let desired = cfg.desired().unwrap();
    let g = uniform_placement(65, 15).unwrap();
    let rep = solve_covariance(&g, &desired, &grid, 1.0, None).unwrap();
    let couplings = build_couplings(&rep.r_opt, &desired, &grid).unwrap();
    let q = quartic_objective(&couplings, &LiftedPoint::new(rep.alpha_opt, &g).to_vector());
    assert!((q - rep.objective).abs() < 1e-9 * rep.objective);
}

#[test]
fn admm_descends_and_rounds_inside_the_oracle_bracket() {
    let cfg = DriverConfig {
        grid_points: 6,
        antennas: 3,
        mainlobes: vec![MainlobeSpec::new(0.0, 20.0)],
        ..DriverConfig::standard()
    };
    let grid = cfg.array_grid().unwrap();
    let desired = cfg.desired().unwrap();
    let r = canonical_covariance(CanonicalKind::PhasedArray, 6, 1.0).unwrap();
    let couplings = build_couplings(&r, &desired, &grid).unwrap();
    let g0 = uniform_placement(6, 3).unwrap();
    let start = solve_covariance(&g0, &desired, &grid, 1.0, None).unwrap();
    let out = admm_solve(&couplings, 3, cfg.rho, &LiftedPoint::new(start.alpha_opt, &g0)).unwrap();
    assert!(out.relaxed_objective <= out.init_objective + 1e-6);

    let rounded = round_placement(&out.relaxed, 3).unwrap();
    let value = solve_covariance(&rounded, &desired, &grid, 1.0, None).unwrap().objective;
    let oracle = exhaustive_search(&cfg).unwrap();
    let worst = oracle.per_placement.last().unwrap().objective;
    assert!(value >= oracle.best_objective - 1e-6 && value <= worst + 1e-6);
}

#[test]
fn rounding_keeps_the_largest_entries_with_low_index_ties() {
    let p = LiftedPoint {
        scale_root: 1.0,
        placement: vec![0.2, 0.9, 0.5, 0.5, 0.9, 0.1],
    };
    assert_eq!(round_placement(&p, 3).unwrap().selected_indices(), vec![1, 2, 4]);
    assert!(round_placement(&p, 7).is_err());
}

#[test]
fn uniform_placement_on_sixty_five_points() {
    let g = uniform_placement(65, 15).unwrap();
    assert_eq!(
        g.selected_indices(),
        vec![0, 5, 9, 14, 18, 23, 27, 32, 37, 41, 46, 50, 55, 59, 64]
    );
    assert_eq!(g.effective_aperture(), 65);
    assert_eq!(uniform_placement(15, 15).unwrap().selected_indices(), (0..15).collect::<Vec<_>>());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn capped_simplex_projection_is_feasible_and_idempotent(
        v in proptest::collection::vec(-3.0f64..3.0, 1..20),
        frac in 0.0f64..1.0,
    ) {
        let n = (frac * v.len() as f64).floor();
        let p = project_capped_simplex(&v, n);
        prop_assert!((p.iter().sum::<f64>() - n).abs() < 1e-9);
        prop_assert!(p.iter().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
        let again = project_capped_simplex(&p, n);
        for (a, b) in p.iter().zip(&again) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rounding_selects_exactly_n(v in proptest::collection::vec(0.0f64..1.0, 1..30), k in 0usize..30) {
        let n = k.min(v.len());
        let g = round_placement(&LiftedPoint { scale_root: 1.0, placement: v.clone() }, n).unwrap();
        prop_assert_eq!(g.selected_indices().len(), n);
        let chosen_min = g.selected_indices().iter().map(|&i| v[i]).fold(f64::INFINITY, f64::min);
        let other_max = (0..v.len())
            .filter(|i| !g.selected_indices().contains(i))
            .map(|i| v[i])
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(n == 0 || chosen_min >= other_max);
    }

    #[test]
    fn uniform_placement_is_valid(m in 1usize..80, frac in 0.0f64..=1.0) {
        let n = ((m as f64) * frac).round().max(1.0) as usize;
        let g = uniform_placement(m, n).unwrap();
        let idx = g.selected_indices();
        prop_assert_eq!(idx.len(), n);
        prop_assert_eq!(idx[0], 0);
        if n > 1 {
            prop_assert_eq!(*idx.last().unwrap(), m - 1);
        }
    }
}
