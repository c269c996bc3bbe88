//! Target beampatterns and the weighted matching cost.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{masked_steering, steering_vector, ArrayGrid, C64};
use crate::pattern::{angle_coupling_block, CovarianceMatrix};
use crate::placement::PlacementVector;

/// Uniformly spaced angles covering `[-90°, 90°]`, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleGrid {
    degrees: Vec<f64>,
    radians: Vec<f64>,
    spacing_deg: f64,
}

impl AngleGrid {
    /// `step_deg` must divide 180° evenly; a 1° step gives 181 angles.
    pub fn uniform(step_deg: f64) -> Result<Self> {
        if !(step_deg.is_finite() && step_deg > 0.0) {
            return Err(Error::Domain(format!(
                "angle spacing must be positive, got {step_deg}"
            )));
        }
        let intervals = 180.0 / step_deg;
        let count = intervals.round();
        if (intervals - count).abs() > 1e-9 * intervals.max(1.0) {
            return Err(Error::Domain(format!(
                "angle spacing {step_deg}° does not divide 180°"
            )));
        }
        let count = count as usize;
        let degrees: Vec<f64> = (0..=count)
            .map(|k| -90.0 + k as f64 * step_deg)
            .map(|d| if (d - 90.0).abs() < 1e-9 { 90.0 } else { d })
            .collect();
        let radians = degrees.iter().map(|d| d.to_radians()).collect();
        Ok(Self {
            degrees,
            radians,
            spacing_deg: step_deg,
        })
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn radians(&self) -> &[f64] {
        &self.radians
    }

    pub fn spacing_deg(&self) -> f64 {
        self.spacing_deg
    }
}

/// One rectangular mainlobe of the target pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MainlobeSpec {
    pub center_deg: f64,
    pub width_deg: f64,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_level() -> f64 {
    1.0
}

impl MainlobeSpec {
    pub fn new(center_deg: f64, width_deg: f64) -> Self {
        Self {
            center_deg,
            width_deg,
            level: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.width_deg.is_finite() && self.width_deg > 0.0) {
            return Err(Error::Domain(format!(
                "mainlobe width must be positive, got {}",
                self.width_deg
            )));
        }
        if !(self.level.is_finite() && self.level > 0.0) {
            return Err(Error::Domain(format!(
                "mainlobe level must be positive, got {}",
                self.level
            )));
        }
        let lo = self.center_deg - self.width_deg / 2.0;
        let hi = self.center_deg + self.width_deg / 2.0;
        if lo < -90.0 - 1e-9 || hi > 90.0 + 1e-9 {
            return Err(Error::Domain(format!(
                "mainlobe [{lo}°, {hi}°] leaves the visible range [-90°, 90°]"
            )));
        }
        Ok(())
    }

    fn contains(&self, deg: f64) -> bool {
        (deg - self.center_deg).abs() <= self.width_deg / 2.0 + 1e-9
    }
}

/// Desired power `P_d(θ_k)` and weight `ω_k` on every grid angle.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredPattern {
    grid: AngleGrid,
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl DesiredPattern {
    pub fn new(grid: AngleGrid, values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_dim("DesiredPattern values", grid.len(), values.len())?;
        check_dim("DesiredPattern weights", grid.len(), weights.len())?;
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain("desired values must be nonnegative".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Domain("weights must be nonnegative".into()));
        }
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::Domain("at least one weight must be positive".into()));
        }
        Ok(Self {
            grid,
            values,
            weights,
        })
    }

    pub fn with_weights(self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.grid, self.values, weights)
    }

    pub fn grid(&self) -> &AngleGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Rectangular target: `level` inside any closed lobe interval, zero elsewhere,
/// unit weights. Overlapping lobes take the larger level.
pub fn build_desired(lobes: &[MainlobeSpec], grid: &AngleGrid) -> Result<DesiredPattern> {
    for lobe in lobes {
        lobe.validate()?;
    }
    let values = grid
        .degrees()
        .iter()
        .map(|&d| {
            lobes
                .iter()
                .filter(|l| l.contains(d))
                .map(|l| l.level)
                .fold(0.0, f64::max)
        })
        .collect();
    let weights = vec![1.0; grid.len()];
    DesiredPattern::new(grid.clone(), values, weights)
}

fn check_cost_inputs(
    r: &CovarianceMatrix,
    g: &PlacementVector,
    alpha: f64,
    grid: &ArrayGrid,
) -> Result<()> {
    check_dim("matching_cost covariance", grid.len(), r.dim())?;
    check_dim("matching_cost placement", grid.len(), g.len())?;
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::Domain(format!("scale must be nonnegative, got {alpha}")));
    }
    Ok(())
}

fn weighted_mean_square(desired: &DesiredPattern, alpha: f64, q: impl Iterator<Item = f64>) -> f64 {
    let k = desired.len() as f64;
    q.zip(desired.values().iter().zip(desired.weights()))
        .map(|(q, (&p, &w))| {
            let r = q - alpha * p;
            w * r * r
        })
        .sum::<f64>()
        / k
}

/// `(1/K) Σ_k ω_k ((g⊙a_k)ᴴ R (g⊙a_k) − α P_d(θ_k))²`.
pub fn matching_cost(
    r: &CovarianceMatrix,
    g: &PlacementVector,
    alpha: f64,
    desired: &DesiredPattern,
    grid: &ArrayGrid,
) -> Result<f64> {
    check_cost_inputs(r, g, alpha, grid)?;
    let gv = DVector::from_column_slice(g.values());
    let mut q = Vec::with_capacity(desired.len());
    for &t in desired.grid().radians() {
        let a = steering_vector(grid, t)?;
        let ga = a.entries().component_mul(&gv.map(|x| C64::new(x, 0.0)));
        q.push(ga.dotc(&(r.entries() * &ga)).re);
    }
    Ok(weighted_mean_square(desired, alpha, q.into_iter()))
}

/// Same cost through the masked steering vector `b = conj(g⊙a)`:
/// `Σ_mn Re{R_mn (b bᴴ)_mn}` per angle.
pub fn matching_cost_masked(
    r: &CovarianceMatrix,
    g: &PlacementVector,
    alpha: f64,
    desired: &DesiredPattern,
    grid: &ArrayGrid,
) -> Result<f64> {
    check_cost_inputs(r, g, alpha, grid)?;
    let n = grid.len();
    let mut q = Vec::with_capacity(desired.len());
    for &t in desired.grid().radians() {
        let a = steering_vector(grid, t)?;
        let b = masked_steering(g, &a)?;
        let mut acc = 0.0;
        for m in 0..n {
            for k in 0..n {
                acc += (r.entries()[(m, k)] * b[m] * b[k].conj()).re;
            }
        }
        q.push(acc);
    }
    Ok(weighted_mean_square(desired, alpha, q.into_iter()))
}

/// Same cost through the real blocks `Φ_k = Re{R ⊙ conj(a_k a_kᴴ)}`: `gᵀ Φ_k g`.
pub fn matching_cost_blocks(
    r: &CovarianceMatrix,
    g: &PlacementVector,
    alpha: f64,
    desired: &DesiredPattern,
    grid: &ArrayGrid,
) -> Result<f64> {
    check_cost_inputs(r, g, alpha, grid)?;
    let gv = DVector::from_column_slice(g.values());
    let mut q = Vec::with_capacity(desired.len());
    for &t in desired.grid().radians() {
        let a = steering_vector(grid, t)?;
        let phi = angle_coupling_block(r.entries(), a.entries());
        q.push(gv.dot(&(&phi * &gv)));
    }
    Ok(weighted_mean_square(desired, alpha, q.into_iter()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::{canonical_covariance, CanonicalKind};

    #[test]
    fn one_degree_grid_has_181_points() {
        let g = AngleGrid::uniform(1.0).unwrap();
        assert_eq!(g.len(), 181);
        assert_eq!(g.degrees()[0], -90.0);
        assert_eq!(g.degrees()[180], 90.0);
        assert!(g.degrees().windows(2).all(|w| w[1] > w[0]));
        assert!(AngleGrid::uniform(7.0).is_err());
        assert!(AngleGrid::uniform(0.0).is_err());
    }

    #[test]
    fn two_lobe_target_membership() {
        let grid = AngleGrid::uniform(1.0).unwrap();
        let d = build_desired(
            &[MainlobeSpec::new(40.0, 25.0), MainlobeSpec::new(-20.0, 10.0)],
            &grid,
        )
        .unwrap();
        for (deg, v) in grid.degrees().iter().zip(d.values()) {
            let deg = deg.round() as i32;
            let inside = (28..=52).contains(&deg) || (-25..=-15).contains(&deg);
            assert_eq!(*v, if inside { 1.0 } else { 0.0 }, "at {deg}°");
        }
        assert!(d.weights().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn empty_and_full_targets() {
        let grid = AngleGrid::uniform(1.0).unwrap();
        let d = build_desired(&[], &grid).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.0));
        let d = build_desired(&[MainlobeSpec::new(0.0, 180.0)], &grid).unwrap();
        assert!(d.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn overlapping_lobes_take_the_max_level() {
        let grid = AngleGrid::uniform(1.0).unwrap();
        let mut hi = MainlobeSpec::new(10.0, 10.0);
        hi.level = 2.0;
        let d = build_desired(&[MainlobeSpec::new(0.0, 20.0), hi], &grid).unwrap();
        assert_eq!(d.values()[90 + 7], 2.0);
        assert_eq!(d.values()[90 - 7], 1.0);
    }

    #[test]
    fn lobe_outside_range_is_rejected() {
        let grid = AngleGrid::uniform(1.0).unwrap();
        assert!(matches!(
            build_desired(&[MainlobeSpec::new(85.0, 20.0)], &grid),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn invalid_weights_are_rejected() {
        let grid = AngleGrid::uniform(30.0).unwrap();
        let n = grid.len();
        assert!(DesiredPattern::new(grid.clone(), vec![0.0; n], vec![0.0; n]).is_err());
        assert!(DesiredPattern::new(grid.clone(), vec![0.0; n], vec![-1.0; n]).is_err());
        assert!(DesiredPattern::new(grid, vec![0.0; n - 1], vec![1.0; n]).is_err());
    }

    #[test]
    fn zero_placement_cost_is_mean_square_target() {
        let grid = AngleGrid::uniform(1.0).unwrap();
        let d = build_desired(&[MainlobeSpec::new(0.0, 20.0)], &grid).unwrap();
        let array = ArrayGrid::new(4, 0.5).unwrap();
        let r = canonical_covariance(CanonicalKind::Orthogonal, 4, 1.0).unwrap();
        let g = PlacementVector::from_indices(4, &[]).unwrap();
        let cost = matching_cost(&r, &g, 1.0, &d, &array).unwrap();
        let expect = d.values().iter().map(|v| v * v).sum::<f64>() / 181.0;
        assert!((cost - expect).abs() < 1e-14);
    }

    #[test]
    fn selected_count_squared_when_scale_is_zero() {
        // diag(a aᴴ) = 1, so with R = I the form counts selected antennas
        let grid = AngleGrid::uniform(1.0).unwrap();
        let d = build_desired(&[MainlobeSpec::new(0.0, 20.0)], &grid).unwrap();
        let array = ArrayGrid::new(3, 0.5).unwrap();
        let r = canonical_covariance(CanonicalKind::Orthogonal, 3, 1.0).unwrap();
        let g = PlacementVector::from_indices(3, &[0, 2]).unwrap();
        for cost in [
            matching_cost(&r, &g, 0.0, &d, &array).unwrap(),
            matching_cost_masked(&r, &g, 0.0, &d, &array).unwrap(),
            matching_cost_blocks(&r, &g, 0.0, &d, &array).unwrap(),
        ] {
            assert!((cost - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_match_costs_nothing() {
        let grid = AngleGrid::uniform(2.0).unwrap();
        let array = ArrayGrid::new(4, 0.25).unwrap();
        let r = canonical_covariance(CanonicalKind::ExpDecay(0.5), 4, 1.0).unwrap();
        let g = PlacementVector::all_ones(4);
        let values: Vec<f64> = grid
            .radians()
            .iter()
            .map(|&t| {
                let a = steering_vector(&array, t).unwrap();
                crate::pattern::evaluate_pattern(&r, &a, false).unwrap() / 2.0
            })
            .collect();
        let d = DesiredPattern::new(grid.clone(), values, vec![1.0; grid.len()]).unwrap();
        assert!(matching_cost(&r, &g, 2.0, &d, &array).unwrap() < 1e-20);
    }

    #[test]
    fn negative_scale_is_rejected() {
        let grid = AngleGrid::uniform(10.0).unwrap();
        let d = build_desired(&[], &grid).unwrap();
        let array = ArrayGrid::new(2, 0.5).unwrap();
        let r = canonical_covariance(CanonicalKind::Orthogonal, 2, 1.0).unwrap();
        let g = PlacementVector::all_ones(2);
        assert!(matching_cost(&r, &g, -1.0, &d, &array).is_err());
        let g3 = PlacementVector::all_ones(3);
        assert!(matches!(
            matching_cost(&r, &g3, 1.0, &d, &array),
            Err(Error::Dimension { .. })
        ));
    }
}
