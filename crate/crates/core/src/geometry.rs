//! Candidate-position grid and steering vectors.
//!
//! Positions are measured in carrier wavelengths, so a pitch of one eighth of
//! a wavelength is simply `spacing = 0.125`. The grid is anchored at zero: an
//! absolute offset only contributes a global phase that cancels in every
//! quadratic form `aᴴ R a`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Complex, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::placement::PlacementVector;

pub type C64 = Complex<f64>;

/// Uniform grid of `M` candidate antenna positions on a line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGrid {
    spacing: f64,
    positions: Vec<f64>,
}

impl ArrayGrid {
    pub fn new(num_points: usize, spacing_wavelengths: f64) -> Result<Self> {
        if num_points == 0 {
            return Err(Error::Domain("grid needs at least one point".into()));
        }
        if !(spacing_wavelengths.is_finite() && spacing_wavelengths > 0.0) {
            return Err(Error::Domain(format!(
                "grid spacing must be positive, got {spacing_wavelengths}"
            )));
        }
        let positions = (0..num_points)
            .map(|i| i as f64 * spacing_wavelengths)
            .collect();
        Ok(Self {
            spacing: spacing_wavelengths,
            positions,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Positions in wavelengths; `positions()[i] = i * spacing`.
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }
}

/// Far-field steering vector `a(θ)` over the full grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    angle: f64,
    entries: DVector<C64>,
}

impl SteeringVector {
    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn entries(&self) -> &DVector<C64> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn into_entries(self) -> DVector<C64> {
        self.entries
    }
}

pub(crate) fn check_angle(angle_rad: f64) -> Result<()> {
    // a few ulps of slack so that degree-to-radian conversions of ±90° pass
    if angle_rad.is_finite() && angle_rad.abs() <= FRAC_PI_2 * (1.0 + 1e-15) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "angle {angle_rad} rad outside [-pi/2, pi/2]"
        )))
    }
}

/// `entries[i] = exp(j 2π z_i sin θ)` with `z_i` in wavelengths.
pub fn steering_vector(grid: &ArrayGrid, angle_rad: f64) -> Result<SteeringVector> {
    check_angle(angle_rad)?;
    let s = angle_rad.sin();
    let entries = DVector::from_iterator(
        grid.len(),
        grid.positions().iter().map(|&z| {
            let phase = 2.0 * PI * z * s;
            C64::new(phase.cos(), phase.sin())
        }),
    );
    Ok(SteeringVector {
        angle: angle_rad,
        entries,
    })
}

/// Masked steering vector `b(θ) = conj(g ⊙ a(θ))`.
pub fn masked_steering(g: &PlacementVector, a: &SteeringVector) -> Result<DVector<C64>> {
    check_dim("masked_steering", a.len(), g.len())?;
    Ok(DVector::from_iterator(
        a.len(),
        g.values()
            .iter()
            .zip(a.entries().iter())
            .map(|(&gi, ai)| (ai * gi).conj()),
    ))
}

/// Steering vectors for every angle of a grid, reused by the solvers.
pub(crate) fn steering_table(grid: &ArrayGrid, angles_rad: &[f64]) -> Result<Vec<DVector<C64>>> {
    angles_rad
        .iter()
        .map(|&t| steering_vector(grid, t).map(SteeringVector::into_entries))
        .collect()
}
