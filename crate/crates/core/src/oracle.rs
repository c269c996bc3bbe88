//! Exhaustive reference search over every Boolean placement of a small grid.
//!
//! Each placement gets its own covariance step at tightened tolerances, so the
//! best entry is the global optimum of the joint problem up to solver accuracy.

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{solve_covariance_with, CovSolveOptions};
use crate::driver::{uniform_placement, DriverConfig};
use crate::error::{Error, Result};
use crate::placement::PlacementVector;

/// Refusal thresholds for [`exhaustive_search`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationLimits {
    pub max_grid_points: usize,
    pub max_placements: u128,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        Self {
            max_grid_points: 14,
            max_placements: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub indices: Vec<usize>,
    pub objective: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub grid_points: usize,
    pub antennas: usize,
    pub best_placement: PlacementVector,
    pub best_objective: f64,
    /// Ascending by objective; ties keep lexicographic order.
    pub per_placement: Vec<OracleEntry>,
}

impl OracleResult {
    pub fn objective_of(&self, indices: &[usize]) -> Option<f64> {
        self.per_placement
            .iter()
            .find(|e| e.indices == indices)
            .map(|e| e.objective)
    }
}

/// `C(m, n)`, saturating at `u128::MAX`.
pub fn binomial(m: usize, n: usize) -> u128 {
    if n > m {
        return 0;
    }
    let k = n.min(m - n) as u128;
    let m = m as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc = C(m, i), so acc (m − i) / (i + 1) is exact
        acc = match acc.checked_mul(m - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

pub fn exhaustive_search(config: &DriverConfig) -> Result<OracleResult> {
    exhaustive_search_with(config, &EnumerationLimits::default())
}

pub fn exhaustive_search_with(config: &DriverConfig, limits: &EnumerationLimits) -> Result<OracleResult> {
    config.validate()?;
    let (m, n) = (config.grid_points, config.antennas);
    let count = binomial(m, n);
    if m > limits.max_grid_points || count > limits.max_placements {
        return Err(Error::EnumerationGuard {
            m,
            n,
            count,
            max_m: limits.max_grid_points,
            limit: limits.max_placements,
        });
    }
    let grid = config.array_grid()?;
    let desired = config.desired()?;
    let opts = CovSolveOptions::tight();

    let combos: Vec<Vec<usize>> = (0..m).combinations(n).collect();
    let solved: Vec<OracleEntry> = combos
        .into_par_iter()
        .map(|indices| {
            let g = PlacementVector::from_indices(m, &indices)?;
            let rep = solve_covariance_with(&g, &desired, &grid, config.power, None, &opts)?;
            Ok(OracleEntry {
                indices,
                objective: rep.objective,
                alpha: rep.alpha_opt,
            })
        })
        .collect::<Result<_>>()?;

    let mut per_placement = solved;
    per_placement.sort_by(|a, b| a.objective.total_cmp(&b.objective));
    let best = &per_placement[0];
    Ok(OracleResult {
        grid_points: m,
        antennas: n,
        best_placement: PlacementVector::from_indices(m, &best.indices)?,
        best_objective: best.objective,
        per_placement,
    })
}

/// Where a driver result sits relative to the oracle optimum and the uniform
/// placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub oracle_best: f64,
    pub driver_objective: f64,
    pub uniform_objective: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Bracket {
    pub fn new(oracle_best: f64, driver_objective: f64, uniform_objective: f64, tolerance: f64) -> Self {
        let pass = driver_objective >= oracle_best - tolerance
            && driver_objective <= uniform_objective + tolerance;
        Self {
            oracle_best,
            driver_objective,
            uniform_objective,
            tolerance,
            pass,
        }
    }
}

/// Uniform-placement objective as recorded by the oracle.
pub fn uniform_entry(result: &OracleResult) -> Result<f64> {
    let g = uniform_placement(result.grid_points, result.antennas)?;
    result
        .objective_of(&g.selected_indices())
        .ok_or_else(|| Error::Invariant("uniform placement missing from the enumeration".into()))
}
