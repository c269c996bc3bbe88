//! Antenna placement step.
//!
//! For a fixed correlation matrix the matching cost is a quartic in the
//! lifted vector `x = [√α; g]`:
//!
//! `J = (1/K) Σ_k ω_k (xᵀ A_k x)²`, `A_k = diag(−P_d(θ_k), Φ_k)`.
//!
//! The Boolean constraint on `g` is relaxed to `[0, 1]` and the quartic is
//! split into the biquadratic `F(x, y) = (1/K) Σ_k ω_k (xᵀ A_k y)²` under the
//! consensus constraint `x = y`. Scaled-form ADMM then alternates two
//! strictly convex QPs (one in `x`, one in `y`) with a dual ascent on `u`.
//! The relaxed solution is rounded by keeping its `N` largest entries.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::desired::DesiredPattern;
use crate::error::{check_dim, Error, Result};
use crate::geometry::{steering_table, ArrayGrid};
use crate::pattern::{angle_coupling_block, CovarianceMatrix};
use crate::qp::{solve_active_set, solve_projected_gradient, InnerMethod, LiftedSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlacementMode {
    Boolean,
    Relaxed,
}

/// Selection vector over the grid, Boolean or relaxed to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementVector {
    values: Vec<f64>,
    mode: PlacementMode,
}

impl PlacementVector {
    pub fn all_ones(m: usize) -> Self {
        Self {
            values: vec![1.0; m],
            mode: PlacementMode::Boolean,
        }
    }

    pub fn from_indices(m: usize, indices: &[usize]) -> Result<Self> {
        let mut values = vec![0.0; m];
        for &i in indices {
            if i >= m {
                return Err(Error::Domain(format!("index {i} outside a grid of {m} points")));
            }
            if values[i] == 1.0 {
                return Err(Error::Domain(format!("index {i} selected twice")));
            }
            values[i] = 1.0;
        }
        Ok(Self {
            values,
            mode: PlacementMode::Boolean,
        })
    }

    /// Boolean vector; every entry must be exactly 0 or 1.
    pub fn boolean(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Invariant(format!("Boolean placement holds {v}")));
        }
        Ok(Self {
            values,
            mode: PlacementMode::Boolean,
        })
    }

    /// Relaxed vector with entries in `[0, 1]` summing to `n`.
    pub fn relaxed(values: Vec<f64>, n: usize) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| !(-1e-9..=1.0 + 1e-9).contains(&v)) {
            return Err(Error::Invariant(format!("relaxed placement holds {v}")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - n as f64).abs() > 1e-7 {
            return Err(Error::Invariant(format!(
                "relaxed placement sums to {sum}, expected {n}"
            )));
        }
        Ok(Self {
            values: values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            mode: PlacementMode::Relaxed,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mode(&self) -> PlacementMode {
        self.mode
    }

    /// Indices with a nonzero entry.
    pub fn selected_indices(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Span `last − first + 1` of the selected indices in grid units.
    pub fn effective_aperture(&self) -> usize {
        let idx = self.selected_indices();
        match (idx.first(), idx.last()) {
            (Some(a), Some(b)) => b - a + 1,
            _ => 0,
        }
    }
}

/// Lifted point `x = [√α; g]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedPoint {
    pub scale_root: f64,
    pub placement: Vec<f64>,
}

impl LiftedPoint {
    pub fn new(alpha: f64, placement: &PlacementVector) -> Self {
        Self {
            scale_root: alpha.max(0.0).sqrt(),
            placement: placement.values().to_vec(),
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.placement.len() + 1);
        v[0] = self.scale_root;
        for (i, g) in self.placement.iter().enumerate() {
            v[i + 1] = *g;
        }
        v
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        Self {
            scale_root: v[0],
            placement: v.iter().skip(1).copied().collect(),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.scale_root * self.scale_root
    }
}

/// `A_k` in block form: scalar `−P_d(θ_k)` and `Φ_k = Re{R ⊙ conj(a_k a_kᴴ)}`,
/// carrying the weight `ω_k / K`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleCoupling {
    pub target: f64,
    pub block: DMatrix<f64>,
    pub weight: f64,
}

impl AngleCoupling {
    pub fn dim(&self) -> usize {
        self.block.nrows() + 1
    }

    /// `A_k v`
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = self.block.nrows();
        let tail = &self.block * v.rows(1, m);
        let mut out = DVector::zeros(m + 1);
        out[0] = -self.target * v[0];
        out.rows_mut(1, m).copy_from(&tail);
        out
    }

    /// `xᵀ A_k y`
    pub fn bilinear(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&self.apply(y))
    }

    /// The explicit `(M+1)×(M+1)` matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let m = self.block.nrows();
        let mut a = DMatrix::zeros(m + 1, m + 1);
        a[(0, 0)] = -self.target;
        a.view_mut((1, 1), (m, m)).copy_from(&self.block);
        a
    }
}

pub fn build_couplings(
    r: &CovarianceMatrix,
    desired: &DesiredPattern,
    grid: &ArrayGrid,
) -> Result<Vec<AngleCoupling>> {
    check_dim("build_couplings", grid.len(), r.dim())?;
    let table = steering_table(grid, desired.grid().radians())?;
    let k = desired.len() as f64;
    Ok(table
        .iter()
        .zip(desired.values())
        .zip(desired.weights())
        .map(|((a, &p), &w)| AngleCoupling {
            target: p,
            block: angle_coupling_block(r.entries(), a),
            weight: w / k,
        })
        .collect())
}

/// Split objective `F(x, y) = Σ_k w_k (xᵀ A_k y)²`.
pub fn split_objective(couplings: &[AngleCoupling], x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    couplings
        .iter()
        .map(|c| {
            let v = c.bilinear(x, y);
            c.weight * v * v
        })
        .sum()
}

/// Relaxed quartic objective `Σ_k w_k (xᵀ A_k x)²`.
pub fn quartic_objective(couplings: &[AngleCoupling], x: &DVector<f64>) -> f64 {
    couplings
        .iter()
        .map(|c| {
            let q = c.bilinear(x, x);
            c.weight * q * q
        })
        .sum()
}

/// Iterate of the scaled-form ADMM.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub x: LiftedPoint,
    pub y: LiftedPoint,
    pub u: Vec<f64>,
    pub rho: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iteration: usize,
    /// Inner QPs that fell back to projected gradient in this iteration.
    pub inner_fallbacks: usize,
}

impl AdmmState {
    pub fn start(init: &LiftedPoint, rho: f64) -> Self {
        Self {
            x: init.clone(),
            y: init.clone(),
            u: vec![0.0; init.placement.len() + 1],
            rho,
            primal_residual: 0.0,
            dual_residual: 0.0,
            iteration: 0,
            inner_fallbacks: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmOptions {
    pub max_iter: usize,
    pub primal_tol: f64,
    pub dual_tol: f64,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            primal_tol: 1e-4,
            dual_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    /// Lowest-objective feasible point among the start and all iterates.
    pub relaxed: LiftedPoint,
    pub relaxed_objective: f64,
    pub init_objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<AdmmState>,
}

/// Hessian `2 Σ_k w_k c_k c_kᵀ + ρ I` with `c_k = A_k v` for the fixed side `v`.
fn subproblem_hessian(couplings: &[AngleCoupling], fixed: &DVector<f64>, rho: f64) -> DMatrix<f64> {
    let d = fixed.len();
    let mut cols = DMatrix::zeros(d, couplings.len());
    for (k, c) in couplings.iter().enumerate() {
        let ck = c.apply(fixed) * (2.0 * c.weight).sqrt();
        cols.set_column(k, &ck);
    }
    let mut h = &cols * cols.transpose();
    for i in 0..d {
        h[(i, i)] += rho;
    }
    h
}

/// Inner solve shared by both updates: `min F(·, fixed) + (ρ/2)‖· − anchor‖²`.
fn penalized_step(
    couplings: &[AngleCoupling],
    fixed: &DVector<f64>,
    anchor: &DVector<f64>,
    start: &DVector<f64>,
    rho: f64,
    set: &LiftedSet,
) -> Result<(DVector<f64>, InnerMethod)> {
    let h = subproblem_hessian(couplings, fixed, rho);
    let hv = anchor * rho;
    let start = if set.violation(start) > 1e-9 {
        set.project(start)
    } else {
        start.clone()
    };
    match solve_active_set(&h, &hv, &start, set) {
        Ok(sol) => Ok((sol.x, sol.method)),
        Err(_) => {
            let sol = solve_projected_gradient(&h, &hv, &start, set, 1e-13, 500_000)?;
            Ok((sol.x, sol.method))
        }
    }
}

fn lifted_set(state: &AdmmState, antennas: usize) -> Result<LiftedSet> {
    LiftedSet::new(state.x.placement.len(), antennas)
}

/// `x ← argmin_{x ∈ X} F(x, y) + (ρ/2)‖x − y + u‖²`.
pub fn x_update(
    state: &AdmmState,
    couplings: &[AngleCoupling],
    antennas: usize,
) -> Result<(LiftedPoint, InnerMethod)> {
    let set = lifted_set(state, antennas)?;
    let y = state.y.to_vector();
    let u = DVector::from_column_slice(&state.u);
    let (x, m) = penalized_step(couplings, &y, &(&y - &u), &state.x.to_vector(), state.rho, &set)?;
    Ok((LiftedPoint::from_vector(&x), m))
}

/// `y ← argmin_{y ∈ X} F(x, y) + (ρ/2)‖x − y + u‖²`, with `x` already updated.
pub fn y_update(
    state: &AdmmState,
    couplings: &[AngleCoupling],
    antennas: usize,
) -> Result<(LiftedPoint, InnerMethod)> {
    let set = lifted_set(state, antennas)?;
    let x = state.x.to_vector();
    let u = DVector::from_column_slice(&state.u);
    let (y, m) = penalized_step(couplings, &x, &(&x + &u), &state.y.to_vector(), state.rho, &set)?;
    Ok((LiftedPoint::from_vector(&y), m))
}

/// `u ← u + x − y`.
pub fn dual_update(state: &AdmmState) -> Vec<f64> {
    let x = state.x.to_vector();
    let y = state.y.to_vector();
    state
        .u
        .iter()
        .zip((x - y).iter())
        .map(|(u, d)| u + d)
        .collect()
}

pub fn admm_solve(
    couplings: &[AngleCoupling],
    antennas: usize,
    rho: f64,
    init: &LiftedPoint,
) -> Result<AdmmOutcome> {
    admm_solve_with(couplings, antennas, rho, init, &AdmmOptions::default())
}

pub fn admm_solve_with(
    couplings: &[AngleCoupling],
    antennas: usize,
    rho: f64,
    init: &LiftedPoint,
    opts: &AdmmOptions,
) -> Result<AdmmOutcome> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::Domain(format!("penalty must be positive, got {rho}")));
    }
    let m = init.placement.len();
    let set = LiftedSet::new(m, antennas)?;
    if let Some(c) = couplings.iter().find(|c| c.dim() != m + 1) {
        return Err(Error::Dimension {
            context: "admm couplings",
            expected: m + 1,
            actual: c.dim(),
        });
    }
    let start = set.project(&init.to_vector());
    let start_point = LiftedPoint::from_vector(&start);
    let mut state = AdmmState::start(&start_point, rho);
    let init_objective = quartic_objective(couplings, &start);
    let mut best = (init_objective, start_point);
    let mut trace = Vec::new();
    let mut converged = false;

    for it in 1..=opts.max_iter {
        let mut fallbacks = 0;
        let (x_new, mx) = x_update(&state, couplings, antennas)?;
        state.x = x_new;
        let y_prev = state.y.to_vector();
        let (y_new, my) = y_update(&state, couplings, antennas)?;
        state.y = y_new;
        state.u = dual_update(&state);
        fallbacks += usize::from(mx == InnerMethod::ProjectedGradient)
            + usize::from(my == InnerMethod::ProjectedGradient);

        let xv = state.x.to_vector();
        let yv = state.y.to_vector();
        state.primal_residual = (&xv - &yv).norm();
        state.dual_residual = rho * (&yv - &y_prev).norm();
        state.iteration = it;
        state.inner_fallbacks = fallbacks;

        for cand in [&yv, &xv] {
            let f = quartic_objective(couplings, cand);
            if f < best.0 {
                best = (f, LiftedPoint::from_vector(cand));
            }
        }
        trace.push(state.clone());
        if state.primal_residual < opts.primal_tol && state.dual_residual < opts.dual_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "placement ADMM stopped after {} iterations (primal {:.2e}, dual {:.2e})",
            opts.max_iter,
            state.primal_residual,
            state.dual_residual
        );
    }
    Ok(AdmmOutcome {
        relaxed: best.1,
        relaxed_objective: best.0,
        init_objective,
        converged,
        iterations: trace.len(),
        trace,
    })
}

/// Keep the `N` largest placement entries; ties go to the lowest index.
pub fn round_placement(relaxed: &LiftedPoint, antennas: usize) -> Result<PlacementVector> {
    let m = relaxed.placement.len();
    if antennas > m {
        return Err(Error::Infeasible(format!(
            "cannot select {antennas} of {m} grid points"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        relaxed.placement[b]
            .total_cmp(&relaxed.placement[a])
            .then(a.cmp(&b))
    });
    let mut chosen = order[..antennas].to_vec();
    chosen.sort_unstable();
    PlacementVector::from_indices(m, &chosen)
}
