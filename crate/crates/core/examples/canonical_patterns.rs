//! Beampatterns of the three canonical correlation structures on a
//! half-wavelength array, printed as a coarse text plot.
//!
//! Run with `cargo run --example canonical_patterns`.

use beamforge::desired::AngleGrid;
use beamforge::geometry::ArrayGrid;
use beamforge::pattern::{canonical_covariance, sample_pattern, CanonicalKind};

fn main() -> beamforge::Result<()> {
    let grid = ArrayGrid::new(8, 0.5)?;
    let angles = AngleGrid::uniform(10.0)?;
    for (name, kind) in [
        ("phased array", CanonicalKind::PhasedArray),
        ("exp decay 0.7", CanonicalKind::ExpDecay(0.7)),
        ("orthogonal", CanonicalKind::Orthogonal),
    ] {
        let r = canonical_covariance(kind, grid.len(), 1.0)?;
        let pattern = sample_pattern(&r, &grid, angles.radians(), false)?;
        println!("{name}");
        for (deg, s) in angles.degrees().iter().zip(&pattern) {
            let bar = "#".repeat((s.power * 0.75).round() as usize);
            println!("  {deg:>6.1}  {:>7.3}  {bar}", s.power);
        }
    }
    Ok(())
}
