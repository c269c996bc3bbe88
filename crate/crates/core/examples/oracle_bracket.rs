//! Exhaustive search on small grids and where the alternating driver lands.
//!
//! Run with `cargo run --release --example oracle_bracket`.

use std::time::Instant;

use beamforge::desired::MainlobeSpec;
use beamforge::driver::{run, DriverConfig};
use beamforge::oracle::{exhaustive_search, uniform_entry, Bracket};

fn main() -> beamforge::Result<()> {
    for (m, n) in [(8, 3), (10, 4)] {
        let cfg = DriverConfig {
            grid_points: m,
            antennas: n,
            mainlobes: vec![MainlobeSpec::new(0.0, 20.0)],
            ..DriverConfig::standard()
        };
        let t = Instant::now();
        let oracle = exhaustive_search(&cfg)?;
        let took = t.elapsed();
        let uniform = uniform_entry(&oracle)?;
        let driver = run(&cfg)?;
        let b = Bracket::new(oracle.best_objective, driver.objective, uniform, 1e-6);

        println!("M={m} N={n}: {} placements in {took:.1?}", oracle.per_placement.len());
        println!("  oracle best   {:.9e} at {:?}", oracle.best_objective, oracle.per_placement[0].indices);
        println!("  driver        {:.9e} at {:?}", driver.objective, driver.placement.selected_indices());
        println!("  uniform       {:.9e}", uniform);
        println!("  bracket       {}", if b.pass { "pass" } else { "FAIL" });
        let worst = oracle.per_placement.last().expect("non-empty enumeration");
        println!("  worst         {:.9e} at {:?}", worst.objective, worst.indices);
    }
    Ok(())
}
