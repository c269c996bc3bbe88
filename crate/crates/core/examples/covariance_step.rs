//! Covariance step for a fixed placement: interior point against projected
//! gradient, and how the optimum depends on the element spacing.
//!
//! Run with `cargo run --release --example covariance_step`.

use std::time::Instant;

use beamforge::covariance::{solve_covariance_with, CovSolveOptions};
use beamforge::driver::DriverConfig;
use beamforge::placement::PlacementVector;

fn main() -> beamforge::Result<()> {
    let cfg = DriverConfig::standard();
    let grid = cfg.array_grid()?;
    let desired = cfg.desired()?;

    for step in [1, 2, 3, 4] {
        let idx: Vec<usize> = (0..cfg.antennas).map(|i| i * step).collect();
        let g = PlacementVector::from_indices(cfg.grid_points, &idx)?;
        let t = Instant::now();
        let rep = solve_covariance_with(&g, &desired, &grid, cfg.power, None, &CovSolveOptions::default())?;
        println!(
            "spacing {:.3} λ: objective {:.6e}, alpha {:.4}, {} Newton steps, {:.1?}",
            step as f64 * cfg.spacing_wavelengths,
            rep.objective,
            rep.alpha_opt,
            rep.iterations,
            t.elapsed()
        );
    }

    // the same step solved by projected gradient, on a small support
    let g = PlacementVector::from_indices(cfg.grid_points, &[0, 3, 7, 12, 18, 25])?;
    for (name, opts) in [
        ("interior point", CovSolveOptions::default()),
        ("projected gradient", CovSolveOptions::projected_gradient()),
    ] {
        let t = Instant::now();
        let rep = solve_covariance_with(&g, &desired, &grid, cfg.power, None, &opts)?;
        println!(
            "{name:>18}: objective {:.9e} after {} iterations ({:.1?})",
            rep.objective,
            rep.iterations,
            t.elapsed()
        );
    }
    Ok(())
}
