//! One placement step: relaxed ADMM against a fixed correlation matrix,
//! followed by rounding, with the residual history.
//!
//! Run with `cargo run --release --example placement_admm`.

use beamforge::covariance::solve_covariance;
use beamforge::desired::MainlobeSpec;
use beamforge::driver::{uniform_placement, DriverConfig};
use beamforge::placement::{admm_solve, build_couplings, round_placement, LiftedPoint, PlacementVector};

fn main() -> beamforge::Result<()> {
    let cfg = DriverConfig {
        grid_points: 12,
        antennas: 5,
        mainlobes: vec![MainlobeSpec::new(0.0, 20.0)],
        ..DriverConfig::standard()
    };
    let grid = cfg.array_grid()?;
    let desired = cfg.desired()?;

    // the fully populated grid supplies every pairwise correlation
    let full = solve_covariance(&PlacementVector::all_ones(cfg.grid_points), &desired, &grid, cfg.power, None)?;
    let g0 = uniform_placement(cfg.grid_points, cfg.antennas)?;
    let start = solve_covariance(&g0, &desired, &grid, cfg.power, None)?;
    let couplings = build_couplings(&full.r_opt, &desired, &grid)?;

    let init = LiftedPoint::new(start.alpha_opt, &g0);
    let out = admm_solve(&couplings, cfg.antennas, cfg.rho, &init)?;
    for s in out.trace.iter().step_by(50) {
        println!(
            "iter {:>3}: primal {:.3e} dual {:.3e}",
            s.iteration, s.primal_residual, s.dual_residual
        );
    }
    println!("relaxed objective {:.6e} (start {:.6e})", out.relaxed_objective, out.init_objective);
    let relaxed: Vec<String> = out.relaxed.placement.iter().map(|v| format!("{v:.2}")).collect();
    println!("relaxed g: {}", relaxed.join(" "));

    let rounded = round_placement(&out.relaxed, cfg.antennas)?;
    let after = solve_covariance(&rounded, &desired, &grid, cfg.power, None)?;
    println!(
        "uniform {:?}: {:.6e}\nrounded {:?}: {:.6e}",
        g0.selected_indices(),
        start.objective,
        rounded.selected_indices(),
        after.objective
    );
    Ok(())
}
