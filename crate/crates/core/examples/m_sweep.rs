//! Final objective against the number of grid points for 15 antennas.
//!
//! Run with `cargo run --release --example m_sweep`.

use std::time::Instant;

use beamforge::driver::{baseline_uniform_run, run, to_db, DriverConfig};

fn main() -> beamforge::Result<()> {
    let base = DriverConfig::standard();
    println!("{:>4} {:>14} {:>9} {:>14} {:>9} {:>8}", "M", "joint", "dB", "uniform", "aperture", "time");
    for m in [15, 20, 25, 30, 40, 65] {
        let cfg = base.with_grid_points(m);
        let t = Instant::now();
        let out = run(&cfg)?;
        let uniform = baseline_uniform_run(&cfg)?;
        println!(
            "{m:>4} {:>14.6e} {:>9.2} {:>14.6e} {:>9} {:>8.1?}",
            out.objective,
            to_db(out.objective),
            uniform.objective,
            out.placement.effective_aperture(),
            t.elapsed()
        );
    }
    Ok(())
}
