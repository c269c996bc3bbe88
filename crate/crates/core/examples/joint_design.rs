//! Joint covariance and placement design on the 65-point, 15-antenna setup.
//!
//! Run with `cargo run --release --example joint_design`.

use std::time::Instant;

use beamforge::driver::{baseline_uniform_run, run, to_db, DriverConfig};

fn main() -> beamforge::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cfg = DriverConfig::standard();

    let t = Instant::now();
    let base = baseline_uniform_run(&cfg)?;
    println!("uniform baseline: {:.6e} ({:.2} dB) in {:.1?}", base.objective, to_db(base.objective), t.elapsed());

    let t = Instant::now();
    let out = run(&cfg)?;
    println!("joint design:     {:.6e} ({:.2} dB) in {:.1?}", out.objective, to_db(out.objective), t.elapsed());
    println!("gap: {:.2} dB", to_db(base.objective) - to_db(out.objective));
    for h in &out.history {
        println!(
            "  iter {:2}  best {:.6e}  current {:.6e}  relaxed {:.6e}  aperture {}",
            h.outer_index, h.objective_boolean, h.objective_current, h.objective_relaxed, h.effective_aperture
        );
    }
    println!("placement: {:?}", out.placement.selected_indices());
    Ok(())
}
