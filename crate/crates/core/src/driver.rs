//! Outer alternation between the covariance step and the placement step.
//!
//! Each outer iteration solves the covariance step for the current Boolean
//! placement, runs the relaxed placement ADMM against the resulting
//! correlation matrix and rounds. The Boolean objective recorded for an
//! iteration is the covariance-step optimum for that iteration's placement,
//! so it is exactly the quantity the oracle enumerates.
//!
//! Entries of `R` outside the selected support do not affect the cost, so the
//! covariance step leaves them open. The placement step, however, reads them
//! as the correlations an unselected position would contribute. The driver
//! therefore solves the covariance step once on the fully populated grid and
//! embeds every support block into that matrix by congruence
//! ([`complete_from_reference`]).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::covariance::{complete_from_reference, solve_covariance};
use crate::desired::{build_desired, AngleGrid, DesiredPattern, MainlobeSpec};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{steering_vector, ArrayGrid, C64};
use crate::pattern::{BeampatternSample, CovarianceMatrix};
use crate::placement::{
    admm_solve, build_couplings, round_placement, LiftedPoint, PlacementVector,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverConfig {
    pub grid_points: usize,
    pub antennas: usize,
    pub spacing_wavelengths: f64,
    pub power: f64,
    pub rho: f64,
    pub max_outer_iter: usize,
    pub outer_tol: f64,
    pub angle_step_deg: f64,
    pub mainlobes: Vec<MainlobeSpec>,
    /// Reserved for randomized fallbacks; the current solvers are deterministic.
    pub seed: u64,
}

impl DriverConfig {
    /// 65 grid points at λ/8, 15 antennas, lobes at 40° and −20°.
    pub fn standard() -> Self {
        Self {
            grid_points: 65,
            antennas: 15,
            spacing_wavelengths: 0.125,
            power: 1.0,
            rho: 30.0,
            max_outer_iter: 30,
            outer_tol: 1e-4,
            angle_step_deg: 1.0,
            mainlobes: vec![MainlobeSpec::new(40.0, 25.0), MainlobeSpec::new(-20.0, 10.0)],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_points == 0 {
            return Err(Error::Domain("grid_points must be at least 1".into()));
        }
        if self.antennas == 0 {
            return Err(Error::Domain("antennas must be at least 1".into()));
        }
        if self.antennas > self.grid_points {
            return Err(Error::Infeasible(format!(
                "antennas ({}) must not exceed grid_points ({})",
                self.antennas, self.grid_points
            )));
        }
        for (name, v) in [
            ("spacing_wavelengths", self.spacing_wavelengths),
            ("power", self.power),
            ("rho", self.rho),
            ("outer_tol", self.outer_tol),
            ("angle_step_deg", self.angle_step_deg),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_outer_iter == 0 {
            return Err(Error::Domain("max_outer_iter must be at least 1".into()));
        }
        if self.mainlobes.is_empty() {
            return Err(Error::Domain("at least one mainlobe is required".into()));
        }
        Ok(())
    }

    pub fn array_grid(&self) -> Result<ArrayGrid> {
        ArrayGrid::new(self.grid_points, self.spacing_wavelengths)
    }

    pub fn desired(&self) -> Result<DesiredPattern> {
        build_desired(&self.mainlobes, &AngleGrid::uniform(self.angle_step_deg)?)
    }

    /// Same configuration on a different grid size.
    pub fn with_grid_points(&self, m: usize) -> Self {
        Self {
            grid_points: m,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub outer_index: usize,
    /// Relaxed objective at the ADMM output.
    pub objective_relaxed: f64,
    /// Best Boolean objective so far; non-increasing along the history.
    pub objective_boolean: f64,
    /// Boolean objective of this iteration's placement.
    pub objective_current: f64,
    pub alpha: f64,
    /// Placement evaluated in this iteration.
    pub placement: PlacementVector,
    pub cov_kkt_residual: f64,
    pub admm_iterations: usize,
    pub effective_aperture: usize,
}

impl IterationRecord {
    pub fn objective_db(&self) -> f64 {
        to_db(self.objective_boolean)
    }
}

/// `10 log10(x)`, with `-inf` for zero.
pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone)]
pub struct DriverOutcome {
    pub r: CovarianceMatrix,
    pub placement: PlacementVector,
    pub alpha: f64,
    pub objective: f64,
    pub history: Vec<IterationRecord>,
}

/// `N` ones at `round(i (M−1)/(N−1))`, collisions moved to the nearest free
/// slot to the right, then to the left.
pub fn uniform_placement(m: usize, n: usize) -> Result<PlacementVector> {
    if n > m {
        return Err(Error::Infeasible(format!(
            "cannot place {n} antennas on {m} grid points"
        )));
    }
    let mut taken = vec![false; m];
    let mut chosen = Vec::with_capacity(n);
    for i in 0..n {
        let target = if n == 1 {
            0
        } else {
            ((i * (m - 1)) as f64 / (n - 1) as f64).round() as usize
        };
        let slot = (target..m)
            .find(|&j| !taken[j])
            .or_else(|| (0..target).rev().find(|&j| !taken[j]))
            .expect("n <= m leaves a free slot");
        taken[slot] = true;
        chosen.push(slot);
    }
    chosen.sort_unstable();
    PlacementVector::from_indices(m, &chosen)
}

fn with_context(e: Error, outer: usize) -> Error {
    match e {
        Error::Convergence {
            what,
            iterations,
            residual,
        } => Error::Convergence {
            what: format!("{what} (outer iteration {outer})"),
            iterations,
            residual,
        },
        other => other,
    }
}

pub fn run(config: &DriverConfig) -> Result<DriverOutcome> {
    config.validate()?;
    let grid = config.array_grid()?;
    let desired = config.desired()?;
    let c = config.power;
    let n = config.antennas;

    let full = PlacementVector::all_ones(config.grid_points);
    let reference = solve_covariance(&full, &desired, &grid, c, None)
        .map_err(|e| with_context(e, 0))?
        .r_opt;

    let mut g = uniform_placement(config.grid_points, n)?;
    let mut relaxed_prev: Option<PlacementVector> = None;
    let mut warm: Option<(CovarianceMatrix, f64)> = None;
    let mut best: Option<(f64, CovarianceMatrix, PlacementVector, f64)> = None;
    let mut history: Vec<IterationRecord> = Vec::new();

    for k in 0..config.max_outer_iter {
        let rep = solve_covariance(
            &g,
            &desired,
            &grid,
            c,
            warm.as_ref().map(|(r, a)| (r, *a)),
        )
        .map_err(|e| with_context(e, k))?;
        let support = g.selected_indices();
        let block = rep.r_opt.submatrix(&support)?;
        let r = complete_from_reference(block.entries(), &support, &reference)?;

        if best.as_ref().is_none_or(|b| rep.objective < b.0) {
            best = Some((rep.objective, r.clone(), g.clone(), rep.alpha_opt));
        }
        let best_obj = best.as_ref().map(|b| b.0).unwrap_or(rep.objective);

        let couplings = build_couplings(&r, &desired, &grid)?;
        let start_g = relaxed_prev.as_ref().unwrap_or(&g);
        let init = LiftedPoint::new(rep.alpha_opt, start_g);
        let admm = admm_solve(&couplings, n, config.rho, &init).map_err(|e| with_context(e, k))?;
        let next = round_placement(&admm.relaxed, n)?;

        log::info!(
            "outer {k}: boolean {:.6e} best {:.6e} relaxed {:.6e} admm {}",
            rep.objective,
            best_obj,
            admm.relaxed_objective,
            admm.iterations
        );
        history.push(IterationRecord {
            outer_index: k,
            objective_relaxed: admm.relaxed_objective,
            objective_boolean: best_obj,
            objective_current: rep.objective,
            alpha: rep.alpha_opt,
            effective_aperture: g.effective_aperture(),
            placement: g,
            cov_kkt_residual: rep.kkt_residual,
            admm_iterations: admm.iterations,
        });
        relaxed_prev = Some(PlacementVector::relaxed(admm.relaxed.placement, n)?);
        warm = Some((r, rep.alpha_opt));
        g = next;

        if stabilized(&history, config.outer_tol) {
            break;
        }
    }

    let (objective, r, placement, alpha) = best.expect("at least one outer iteration");
    Ok(DriverOutcome {
        r,
        placement,
        alpha,
        objective,
        history,
    })
}

/// The last three best-so-far values agree to within `tol` relative.
fn stabilized(history: &[IterationRecord], tol: f64) -> bool {
    if history.len() < 3 {
        return false;
    }
    let tail = &history[history.len() - 3..];
    let first = tail[0].objective_boolean;
    let last = tail[2].objective_boolean;
    (first - last).abs() <= tol * first.abs().max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub r: CovarianceMatrix,
    pub alpha: f64,
    pub objective: f64,
    pub pattern: Vec<BeampatternSample>,
}

/// Covariance step alone, placement fixed to [`uniform_placement`].
pub fn baseline_uniform_run(config: &DriverConfig) -> Result<BaselineOutcome> {
    config.validate()?;
    let grid = config.array_grid()?;
    let desired = config.desired()?;
    let g = uniform_placement(config.grid_points, config.antennas)?;
    let rep = solve_covariance(&g, &desired, &grid, config.power, None)?;
    let pattern = masked_pattern(&rep.r_opt, &g, &grid, desired.grid().radians())?;
    Ok(BaselineOutcome {
        r: rep.r_opt,
        alpha: rep.alpha_opt,
        objective: rep.objective,
        pattern,
    })
}

/// Pattern radiated by the selected elements only, `(g⊙a)ᴴ R (g⊙a)`.
pub fn masked_pattern(
    r: &CovarianceMatrix,
    g: &PlacementVector,
    grid: &ArrayGrid,
    angles_rad: &[f64],
) -> Result<Vec<BeampatternSample>> {
    check_dim("masked_pattern", r.dim(), g.len())?;
    angles_rad
        .iter()
        .map(|&t| {
            let a = steering_vector(grid, t)?;
            let ga = a.entries().component_mul(&DVector::from_iterator(
                g.len(),
                g.values().iter().map(|&v| C64::new(v, 0.0)),
            ));
            let q = ga.dotc(&(r.entries() * &ga));
            Ok(BeampatternSample {
                angle_rad: t,
                power: q.re,
            })
        })
        .collect()
}
