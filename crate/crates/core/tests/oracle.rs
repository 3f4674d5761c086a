mod common;

use common::{close, multi_objective, random_atoms};
use mrt::beta::{beta_best, beta_multi, MultiVariant};
use mrt::dyadic::DyadicCube;
use mrt::geometry::oracle::{brute_force_line_oracle, minimize_over_lines, OracleResolution};
use mrt::geometry::{fit_line, Norm, Point};
use mrt::measure::{DiscreteMeasure, Region};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn least_squares_fit_matches_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let (pts, w) = random_atoms(&mut rng, 5);
        let fit = fit_line(&pts, &w, Norm::P(2.0)).unwrap();
        let grid = brute_force_line_oracle(&pts, &w, Norm::P(2.0)).unwrap();
        assert!(fit.objective <= grid.objective * (1.0 + 1e-12));
        assert!(
            close(fit.objective, grid.objective, 1e-3, 1e-12),
            "{} vs {}",
            fit.objective,
            grid.objective
        );
    }
}

#[test]
fn l1_and_sup_fits_match_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let (pts, w) = random_atoms(&mut rng, 7);
        for norm in [Norm::P(1.0), Norm::Sup, Norm::P(1.5)] {
            let fit = fit_line(&pts, &w, norm).unwrap();
            let grid = brute_force_line_oracle(&pts, &w, norm).unwrap();
            assert!(
                close(fit.objective, grid.objective, 1e-3, 1e-12),
                "{norm:?}: {} vs {}",
                fit.objective,
                grid.objective
            );
        }
    }
}

#[test]
fn oracle_self_consistency_and_circle_limit() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (pts, w) = random_atoms(&mut rng, 5);
    let coarse = OracleResolution {
        directions: 900,
        offsets: 100,
        zoom_levels: 3,
    };
    let a = mrt::geometry::oracle::brute_force_line_oracle_with(&pts, &w, Norm::P(2.0), coarse)
        .unwrap();
    let b = brute_force_line_oracle(&pts, &w, Norm::P(2.0)).unwrap();
    assert!(close(a.objective, b.objective, 1e-3, 1e-12));
    let circle: Vec<Point> = (0..64)
        .map(|i| {
            let t = i as f64 * std::f64::consts::TAU / 64.0;
            Point(vec![t.cos(), t.sin()])
        })
        .collect();
    let ones = vec![1.0; circle.len()];
    for res in [coarse, OracleResolution::default()] {
        let fit =
            mrt::geometry::oracle::brute_force_line_oracle_with(&circle, &ones, Norm::Sup, res)
                .unwrap();
        // Half-width of the minimal strip of a regular 64-gon.
        let expected = (1.0 + (std::f64::consts::PI / 64.0).cos()) / 2.0;
        assert!((fit.objective - expected).abs() < 1e-3, "{}", fit.objective);
    }
}

#[test]
fn three_dimensional_oracle_agrees_with_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let pts: Vec<Point> = (0..6)
        .map(|_| Point(vec![rng.gen(), rng.gen(), rng.gen()]))
        .collect();
    let w = vec![1.0; 6];
    let fit = fit_line(&pts, &w, Norm::P(2.0)).unwrap();
    let grid = brute_force_line_oracle(&pts, &w, Norm::P(2.0)).unwrap();
    assert!(fit.objective <= grid.objective * (1.0 + 1e-12));
    assert!(
        close(fit.objective, grid.objective, 2e-2, 1e-12),
        "{} vs {}",
        fit.objective,
        grid.objective
    );
}

#[test]
fn best_beta_matches_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..10 {
        let (pts, w) = random_atoms(&mut rng, 8);
        let mu = DiscreteMeasure::new(pts.clone(), w.clone()).unwrap();
        let region = Region::Cube(DyadicCube::new(0, vec![0, 0]));
        let b = beta_best(&mu, &region, 2.0).unwrap();
        let grid = brute_force_line_oracle(&pts, &w, Norm::P(2.0)).unwrap();
        let grid_beta = grid.objective.sqrt() / region.diam();
        assert!(close(b.value, grid_beta, 1e-3, 1e-12));
    }
}

#[test]
fn multi_beta_matches_grid_on_small_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for trial in 0..12 {
        let count = rng.gen_range(3..=10);
        let (pts, w) = random_atoms(&mut rng, count);
        let mu = DiscreteMeasure::new(pts.clone(), w).unwrap();
        let k = rng.gen_range(0..=2);
        let q = DyadicCube::at(&pts[0], k);
        let b = beta_multi(&mu, &q, 2.0, MultiVariant::Star).unwrap();
        let objective = multi_objective(&mu, &q, 2.0, MultiVariant::Star);
        let grid = minimize_over_lines(&pts, &objective, OracleResolution::default()).unwrap();
        assert!(
            close(b.value, grid.objective, 1e-3, 1e-9),
            "trial {trial}: {} vs {}",
            b.value,
            grid.objective
        );
    }
}
