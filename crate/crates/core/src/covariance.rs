//! Convex covariance step: for a fixed placement `g`, minimize the matching
//! cost over the scale `α ≥ 0` and the correlation matrix `R ⪰ 0` with
//! `R_mm = c`.
//!
//! The cost only sees the entries of `R` on the support of `g`, so the
//! iteration runs on that principal block. It alternates an exact
//! closed-form update of `α` with a projected gradient step on the block
//! (Barzilai–Borwein trial step, Armijo backtracking along the projection
//! arc). After convergence the block is written back into the full-grid
//! matrix by a congruence of the reference matrix, which keeps the result
//! semidefinite with constant diagonal.

use nalgebra::DMatrix;

use crate::desired::DesiredPattern;
use crate::error::{check_dim, Error, Result};
use crate::geometry::{steering_table, ArrayGrid, C64};
use crate::pattern::CovarianceMatrix;
use crate::placement::PlacementVector;
use crate::barrier::{minimize_block_barrier, BlockLeastSquares};
use crate::projection::{hermitian_part, project_feasible_newton, ProjectionWarmStart};

/// Algorithm used for the support-block problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovMethod {
    /// Log-determinant barrier with equality-constrained Newton centering.
    InteriorPoint,
    /// Projected gradient with Armijo backtracking onto the feasible set.
    ProjectedGradient,
}

/// Stopping rules of the covariance step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovSolveOptions {
    pub method: CovMethod,
    /// Projected gradient iteration cap.
    pub max_iter: usize,
    /// Relative objective decrease regarded as a stall.
    pub rel_tol: f64,
    /// Consecutive stalled iterations before stopping.
    pub patience: usize,
    /// Gradient-mapping norm below which the point counts as stationary.
    pub kkt_tol: f64,
    /// Barrier stopping rule: duality gap bound relative to the objective.
    pub gap_rel: f64,
}

impl Default for CovSolveOptions {
    fn default() -> Self {
        Self {
            method: CovMethod::InteriorPoint,
            max_iter: 5000,
            rel_tol: 1e-8,
            patience: 10,
            kkt_tol: 1e-6,
            gap_rel: 1e-9,
        }
    }
}

impl CovSolveOptions {
    /// Tighter stopping rules used for ground-truth enumeration.
    pub fn tight() -> Self {
        Self {
            rel_tol: 1e-11,
            gap_rel: 1e-11,
            ..Self::default()
        }
    }

    pub fn projected_gradient() -> Self {
        Self {
            method: CovMethod::ProjectedGradient,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct CovSolveReport {
    pub r_opt: CovarianceMatrix,
    pub alpha_opt: f64,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Objective after the exact `α` update and after every accepted step.
    pub objective_trace: Vec<f64>,
}

/// Reduced least-squares data for one placement.
///
/// `beta[k] = (g ⊙ a(θ_k))` restricted to the support of `g`, so that the
/// designed pattern at `θ_k` is `β_kᴴ S β_k` for the support block `S`.
#[derive(Debug, Clone)]
pub struct CovarianceProblem {
    support: Vec<usize>,
    full_dim: usize,
    beta: DMatrix<C64>,
    beta_adj: DMatrix<C64>,
    /// `ω_k / K`
    scaled_weights: Vec<f64>,
    target: Vec<f64>,
    target_energy: f64,
}

impl CovarianceProblem {
    pub fn new(g: &PlacementVector, desired: &DesiredPattern, grid: &ArrayGrid) -> Result<Self> {
        check_dim("CovarianceProblem placement", grid.len(), g.len())?;
        let support: Vec<usize> = g
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect();
        let table = steering_table(grid, desired.grid().radians())?;
        let n = support.len();
        let k = desired.len();
        let beta = DMatrix::from_fn(n, k, |i, j| table[j][support[i]] * g.values()[support[i]]);
        let kf = k as f64;
        let scaled_weights: Vec<f64> = desired.weights().iter().map(|w| w / kf).collect();
        let target = desired.values().to_vec();
        let target_energy = scaled_weights
            .iter()
            .zip(&target)
            .map(|(w, p)| w * p * p)
            .sum();
        Ok(Self {
            support,
            full_dim: grid.len(),
            beta_adj: beta.adjoint(),
            beta,
            scaled_weights,
            target,
            target_energy,
        })
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Designed pattern `β_kᴴ S β_k` on every angle for a support block `S`.
    fn forms(&self, block: &DMatrix<C64>) -> Vec<f64> {
        let sb = block * &self.beta;
        (0..self.beta.ncols())
            .map(|k| self.beta.column(k).dotc(&sb.column(k)).re)
            .collect()
    }

    fn cost_from_forms(&self, q: &[f64], alpha: f64) -> f64 {
        q.iter()
            .zip(&self.target)
            .zip(&self.scaled_weights)
            .map(|((q, p), w)| {
                let r = q - alpha * p;
                w * r * r
            })
            .sum()
    }

    /// Exact minimizer over `α ≥ 0` for fixed forms.
    fn best_alpha(&self, q: &[f64]) -> f64 {
        if self.target_energy <= 0.0 {
            return 0.0;
        }
        let cross: f64 = q
            .iter()
            .zip(&self.target)
            .zip(&self.scaled_weights)
            .map(|((q, p), w)| w * p * q)
            .sum();
        (cross / self.target_energy).max(0.0)
    }

    fn block_gradient(&self, q: &[f64], alpha: f64) -> (DMatrix<C64>, f64) {
        let coeff: Vec<f64> = q
            .iter()
            .zip(&self.target)
            .zip(&self.scaled_weights)
            .map(|((q, p), w)| 2.0 * w * (q - alpha * p))
            .collect();
        let mut weighted = self.beta.clone();
        for (k, c) in coeff.iter().enumerate() {
            weighted.column_mut(k).scale_mut(*c);
        }
        let grad = hermitian_part(&(weighted * &self.beta_adj));
        let dalpha = -coeff.iter().zip(&self.target).map(|(c, p)| c * p).sum::<f64>();
        (grad, dalpha)
    }

    fn extract_block(&self, r: &DMatrix<C64>) -> DMatrix<C64> {
        let s = &self.support;
        DMatrix::from_fn(s.len(), s.len(), |i, j| r[(s[i], s[j])])
    }

    fn check_full(&self, r: &DMatrix<C64>) -> Result<()> {
        check_dim("covariance rows", self.full_dim, r.nrows())?;
        check_dim("covariance cols", self.full_dim, r.ncols())
    }

    /// Matching cost of a full-grid matrix (only the real part of each form counts).
    pub fn objective(&self, r: &DMatrix<C64>, alpha: f64) -> Result<f64> {
        self.check_full(r)?;
        let q = self.forms(&self.extract_block(r));
        Ok(self.cost_from_forms(&q, alpha))
    }

    /// Gradient with respect to `(Re R, Im R)` packed as `∂/∂Re + i ∂/∂Im`, and `∂/∂α`.
    pub fn gradient(&self, r: &DMatrix<C64>, alpha: f64) -> Result<(DMatrix<C64>, f64)> {
        self.check_full(r)?;
        // Non-Hermitian perturbations are allowed here, so use the raw form
        // Re(βᴴ R β) whose gradient is β βᴴ without symmetrization.
        let block = self.extract_block(r);
        let q = self.forms(&block);
        let coeff: Vec<f64> = q
            .iter()
            .zip(&self.target)
            .zip(&self.scaled_weights)
            .map(|((q, p), w)| 2.0 * w * (q - alpha * p))
            .collect();
        let mut weighted = self.beta.clone();
        for (k, c) in coeff.iter().enumerate() {
            weighted.column_mut(k).scale_mut(*c);
        }
        let g_block = weighted * &self.beta_adj;
        let mut full = DMatrix::<C64>::zeros(self.full_dim, self.full_dim);
        for (i, &si) in self.support.iter().enumerate() {
            for (j, &sj) in self.support.iter().enumerate() {
                full[(si, sj)] = g_block[(i, j)];
            }
        }
        let dalpha = -coeff.iter().zip(&self.target).map(|(c, p)| c * p).sum::<f64>();
        Ok((full, dalpha))
    }

    /// Optimal `α` for a full-grid matrix.
    pub fn optimal_alpha(&self, r: &DMatrix<C64>) -> Result<f64> {
        self.check_full(r)?;
        Ok(self.best_alpha(&self.forms(&self.extract_block(r))))
    }

    fn lipschitz_bound(&self) -> f64 {
        (0..self.beta.ncols())
            .map(|k| {
                let n2 = self.beta.column(k).norm_squared();
                2.0 * self.scaled_weights[k] * n2 * n2
            })
            .sum::<f64>()
            .max(1e-300)
    }
}

fn real_inner(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Full-grid reference used when no warm start is supplied:
/// `R₀ = c Σ_k ω_k P_k a_k a_kᴴ / Σ_k ω_k P_k`, the coherent superposition of
/// beams toward every target angle, or `c I` for an all-zero target.
pub fn initial_reference(desired: &DesiredPattern, grid: &ArrayGrid, c: f64) -> Result<CovarianceMatrix> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Domain(format!("power must be positive, got {c}")));
    }
    let m = grid.len();
    let table = steering_table(grid, desired.grid().radians())?;
    let mut r = DMatrix::<C64>::zeros(m, m);
    let mut total = 0.0;
    for ((a, &p), &w) in table.iter().zip(desired.values()).zip(desired.weights()) {
        let wp = w * p;
        if wp > 0.0 {
            r += (a * a.adjoint()).scale(wp);
            total += wp;
        }
    }
    if total <= 0.0 {
        return Ok(CovarianceMatrix::from_trusted(
            DMatrix::from_diagonal_element(m, m, C64::new(c, 0.0)),
            c,
        ));
    }
    let mut r = hermitian_part(&r.scale(c / total));
    for i in 0..m {
        r[(i, i)] = C64::new(c, 0.0);
    }
    Ok(CovarianceMatrix::from_trusted(r, c))
}

/// Maximum-determinant completion: the support block, `c` on the remaining
/// diagonal and no correlation across.
pub fn complete_block_diagonal(block: &DMatrix<C64>, support: &[usize], m: usize, c: f64) -> CovarianceMatrix {
    let mut out = DMatrix::from_diagonal_element(m, m, C64::new(c, 0.0));
    for (i, &si) in support.iter().enumerate() {
        for (j, &sj) in support.iter().enumerate() {
            out[(si, sj)] = block[(i, j)];
        }
        out[(si, si)] = C64::new(c, 0.0);
    }
    CovarianceMatrix::from_trusted(out, c)
}

/// Share of `c I` mixed into a completion reference so that every principal
/// block is positive definite.
const REFERENCE_BLEND: f64 = 1e-4;

fn hermitian_power(m: &DMatrix<C64>, power: f64) -> DMatrix<C64> {
    let eig = hermitian_part(m).symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..m.nrows() {
        let l = eig.eigenvalues[j];
        let s = if l > 0.0 { l.powf(power) } else { 0.0 };
        scaled.column_mut(j).scale_mut(s);
    }
    scaled * eig.eigenvectors.adjoint()
}

/// Embed a support block into the correlation structure of a full-grid
/// reference.
///
/// With the reference `R' = [[A, B], [Bᴴ, D]]` (support first) and
/// `T = S^{1/2} A^{-1/2}`, the result `diag(T, I) R' diag(T, I)ᴴ` has support
/// block `S`, keeps `D` and the diagonal, and is PSD. The reference is first
/// blended with a small multiple of `c I` so that `A` is invertible.
pub fn complete_from_reference(
    block: &DMatrix<C64>,
    support: &[usize],
    reference: &CovarianceMatrix,
) -> Result<CovarianceMatrix> {
    let m = reference.dim();
    let c = reference.diag_power();
    check_dim("completion block", support.len(), block.nrows())?;
    check_dim("completion block", support.len(), block.ncols())?;
    if let Some(&bad) = support.iter().find(|&&i| i >= m) {
        return Err(Error::Domain(format!("support index {bad} outside a grid of {m} points")));
    }
    if support.is_empty() {
        return Ok(reference.clone());
    }
    let mut blended = reference.entries().scale(1.0 - REFERENCE_BLEND);
    for i in 0..m {
        blended[(i, i)] = C64::new(c, 0.0);
    }
    let a = DMatrix::from_fn(support.len(), support.len(), |i, j| {
        blended[(support[i], support[j])]
    });
    let t = hermitian_power(block, 0.5) * hermitian_power(&a, -0.5);
    let mut lift = DMatrix::<C64>::identity(m, m);
    for (i, &si) in support.iter().enumerate() {
        for (j, &sj) in support.iter().enumerate() {
            lift[(si, sj)] = t[(i, j)];
        }
    }
    let mut out = hermitian_part(&(&lift * blended * lift.adjoint()));
    for (i, &si) in support.iter().enumerate() {
        for (j, &sj) in support.iter().enumerate() {
            out[(si, sj)] = block[(i, j)];
        }
    }
    for i in 0..m {
        out[(i, i)] = C64::new(c, 0.0);
    }
    Ok(CovarianceMatrix::from_trusted(out, c))
}

/// Covariance step with default stopping rules.
pub fn solve_covariance(
    g: &PlacementVector,
    desired: &DesiredPattern,
    grid: &ArrayGrid,
    c: f64,
    warm: Option<(&CovarianceMatrix, f64)>,
) -> Result<CovSolveReport> {
    solve_covariance_with(g, desired, grid, c, warm, &CovSolveOptions::default())
}

pub fn solve_covariance_with(
    g: &PlacementVector,
    desired: &DesiredPattern,
    grid: &ArrayGrid,
    c: f64,
    warm: Option<(&CovarianceMatrix, f64)>,
    opts: &CovSolveOptions,
) -> Result<CovSolveReport> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Domain(format!("power must be positive, got {c}")));
    }
    let problem = CovarianceProblem::new(g, desired, grid)?;
    let reference = match warm {
        Some((r, _)) => {
            check_dim("warm start", grid.len(), r.dim())?;
            if (r.diag_power() - c).abs() > 1e-12 * c {
                return Err(Error::Domain(format!(
                    "warm start has diagonal {} but the step requires {c}",
                    r.diag_power()
                )));
            }
            r.clone()
        }
        None => initial_reference(desired, grid, c)?,
    };
    let start = problem.extract_block(reference.entries());
    let n = start.nrows();
    let (block, stats) = if n > 0 && opts.method == CovMethod::InteriorPoint {
        barrier_block(&problem, start, c, opts)?
    } else {
        minimize_block(&problem, start, c, opts)?
    };
    let r_opt = complete_block_diagonal(&block, problem.support(), grid.len(), c);
    Ok(CovSolveReport {
        r_opt,
        alpha_opt: stats.alpha,
        objective: stats.objective,
        iterations: stats.iterations,
        kkt_residual: stats.kkt,
        objective_trace: stats.trace,
    })
}

fn barrier_block(
    problem: &CovarianceProblem,
    start: DMatrix<C64>,
    c: f64,
    opts: &CovSolveOptions,
) -> Result<(DMatrix<C64>, BlockStats)> {
    let ls = BlockLeastSquares {
        beta: &problem.beta,
        weights: &problem.scaled_weights,
        target: &problem.target,
    };
    let out = minimize_block_barrier(&ls, &start, c, opts.gap_rel)?;
    // a warm start that is already optimal must not be made worse by the gap
    let q = problem.forms(&start);
    let a0 = problem.best_alpha(&q);
    let f0 = problem.cost_from_forms(&q, a0);
    if f0 < out.objective {
        return Ok((
            start,
            BlockStats {
                alpha: a0,
                objective: f0,
                iterations: out.newton_steps,
                kkt: out.gap,
                trace: vec![f0],
            },
        ));
    }
    // incumbent objective after each barrier stage
    let mut trace = vec![f0];
    for &f in out.trace.iter().skip(1) {
        let best = trace[trace.len() - 1];
        trace.push(f.min(best));
    }
    Ok((
        out.block,
        BlockStats {
            alpha: out.alpha,
            objective: out.objective,
            iterations: out.newton_steps,
            kkt: out.gap,
            trace,
        },
    ))
}

struct BlockStats {
    alpha: f64,
    objective: f64,
    iterations: usize,
    kkt: f64,
    trace: Vec<f64>,
}

fn minimize_block(
    problem: &CovarianceProblem,
    start: DMatrix<C64>,
    c: f64,
    opts: &CovSolveOptions,
) -> Result<(DMatrix<C64>, BlockStats)> {
    let n = start.nrows();
    let mut warm_proj = ProjectionWarmStart::default();
    let mut block = if n == 0 {
        start
    } else {
        project_feasible_newton(&start, c, &mut warm_proj)?
    };
    let q = problem.forms(&block);
    let mut alpha = problem.best_alpha(&q);
    let mut f = problem.cost_from_forms(&q, alpha);
    let mut trace = vec![f];
    if n == 0 {
        return Ok((
            block,
            BlockStats {
                alpha,
                objective: f,
                iterations: 0,
                kkt: 0.0,
                trace,
            },
        ));
    }

    let base_step = 1.0 / problem.lipschitz_bound();
    let mut step = base_step;
    let (mut grad, _) = problem.block_gradient(&q, alpha);
    let mut stalled = 0;
    let mut kkt = f64::INFINITY;

    for it in 1..=opts.max_iter {
        let mut t = step;
        let mut accepted = None;
        while t >= base_step * 1e-12 {
            let trial = project_feasible_newton(&(&block - grad.scale(t)), c, &mut warm_proj)?;
            let delta = &trial - &block;
            let slope = real_inner(&grad, &delta);
            let q_new = problem.forms(&trial);
            let a_new = problem.best_alpha(&q_new);
            let f_new = problem.cost_from_forms(&q_new, a_new);
            if f_new <= f + 1e-4 * slope {
                accepted = Some((trial, delta, q_new, a_new, f_new, t));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, delta, q_new, a_new, f_new, t_used)) = accepted else {
            // no decrease possible at working precision
            return Ok((
                block,
                BlockStats {
                    alpha,
                    objective: f,
                    iterations: it - 1,
                    kkt: if kkt.is_finite() { kkt } else { 0.0 },
                    trace,
                },
            ));
        };
        let (grad_new, _) = problem.block_gradient(&q_new, a_new);
        kkt = delta.norm() / t_used;

        let dgrad = &grad_new - &grad;
        let sy = real_inner(&delta, &dgrad);
        let ss = delta.norm_squared();
        step = if sy > 0.0 { ss / sy } else { 2.0 * t_used };
        step = step.clamp(base_step * 1e-3, base_step * 1e4);

        let rel = (f - f_new) / f.abs().max(1e-300);
        block = trial;
        grad = grad_new;
        alpha = a_new;
        f = f_new;
        trace.push(f);

        stalled = if rel < opts.rel_tol { stalled + 1 } else { 0 };
        if stalled >= opts.patience || kkt < opts.kkt_tol || f == 0.0 {
            return Ok((
                block,
                BlockStats {
                    alpha,
                    objective: f,
                    iterations: it,
                    kkt,
                    trace,
                },
            ));
        }
    }
    Err(Error::Convergence {
        what: "covariance projected gradient".into(),
        iterations: opts.max_iter,
        residual: kkt,
    })
}
