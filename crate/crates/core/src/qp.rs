//! Small dense convex QPs over the lifted placement set
//!
//! `{ x : x₀ ≥ 0, 0 ≤ x_i ≤ 1 (i ≥ 1), Σ_{i≥1} x_i = N }`,
//!
//! i.e. a nonnegative scale coordinate followed by a capped simplex.
//! The objective is `½ xᵀ H x − hᵀ x` with `H` positive definite.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// The lifted feasible set for `M` grid points and `N` antennas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftedSet {
    pub grid_points: usize,
    pub antennas: usize,
}

impl LiftedSet {
    pub fn new(grid_points: usize, antennas: usize) -> Result<Self> {
        if antennas > grid_points {
            return Err(Error::Infeasible(format!(
                "cannot place {antennas} antennas on {grid_points} grid points"
            )));
        }
        Ok(Self {
            grid_points,
            antennas,
        })
    }

    pub fn dim(&self) -> usize {
        self.grid_points + 1
    }

    fn upper(&self, i: usize) -> f64 {
        if i == 0 {
            f64::INFINITY
        } else {
            1.0
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        out[0] = v[0].max(0.0);
        let tail: Vec<f64> = v.iter().skip(1).copied().collect();
        for (i, g) in project_capped_simplex(&tail, self.antennas as f64)
            .into_iter()
            .enumerate()
        {
            out[i + 1] = g;
        }
        out
    }

    /// Largest violation of the bounds or the sum constraint.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst = (-x[0]).max(0.0);
        let mut sum = 0.0;
        for &g in x.iter().skip(1) {
            worst = worst.max(-g).max(g - 1.0);
            sum += g;
        }
        worst.max((sum - self.antennas as f64).abs())
    }

    /// Norm of the projected gradient step `x − Π(x − ∇)`; zero exactly at
    /// first-order optimal points.
    pub fn stationarity(&self, h_mat: &DMatrix<f64>, h_vec: &DVector<f64>, x: &DVector<f64>) -> f64 {
        let grad = h_mat * x - h_vec;
        (x - self.project(&(x - grad))).norm()
    }
}

/// Projection onto `{0 ≤ g ≤ 1, Σ g = n}`.
pub fn project_capped_simplex(v: &[f64], n: f64) -> Vec<f64> {
    let m = v.len();
    if m == 0 {
        return Vec::new();
    }
    if n <= 0.0 {
        return vec![0.0; m];
    }
    if n >= m as f64 {
        return vec![1.0; m];
    }
    let mass = |tau: f64| v.iter().map(|&x| (x - tau).clamp(0.0, 1.0)).sum::<f64>();
    let mut lo = v.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid) > n {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut tau = 0.5 * (lo + hi);
    // exact shift on the free set identified by bisection
    let (mut free_sum, mut free_count, mut upper) = (0.0, 0usize, 0usize);
    for &x in v {
        let d = x - tau;
        if d >= 1.0 {
            upper += 1;
        } else if d > 0.0 {
            free_sum += x;
            free_count += 1;
        }
    }
    if free_count > 0 {
        let refined = (free_sum + upper as f64 - n) / free_count as f64;
        let consistent = v.iter().all(|&x| {
            let before = x - tau;
            let after = x - refined;
            (before >= 1.0) == (after >= 1.0) && (before > 0.0) == (after > 0.0)
        });
        if consistent {
            tau = refined;
        }
    }
    v.iter().map(|&x| (x - tau).clamp(0.0, 1.0)).collect()
}

/// Which inner method produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerMethod {
    ActiveSet,
    ProjectedGradient,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub method: InnerMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Primal active-set method. `start` must be feasible; bounds it touches
/// seed the working set. Each step solves the equality-constrained KKT
/// system on the free variables.
pub fn solve_active_set(
    h_mat: &DMatrix<f64>,
    h_vec: &DVector<f64>,
    start: &DVector<f64>,
    set: &LiftedSet,
) -> Result<QpSolution> {
    let d = set.dim();
    if h_mat.nrows() != d || h_mat.ncols() != d || h_vec.len() != d || start.len() != d {
        return Err(Error::Dimension {
            context: "active-set QP",
            expected: d,
            actual: h_vec.len(),
        });
    }
    if set.violation(start) > 1e-9 {
        return Err(Error::Domain("active-set start point is infeasible".into()));
    }
    let mut x = start.clone();
    let mut bound: Vec<Bound> = (0..d)
        .map(|i| {
            if x[i] <= 1e-12 {
                x[i] = 0.0;
                Bound::Lower
            } else if x[i] >= set.upper(i) - 1e-12 {
                x[i] = set.upper(i);
                Bound::Upper
            } else {
                Bound::Free
            }
        })
        .collect();
    let in_sum = |i: usize| i >= 1;
    let scale = 1.0 + h_vec.amax() + h_mat.amax();
    let max_iter = 20 * d + 50;

    for it in 0..max_iter {
        let grad = h_mat * &x - h_vec;
        let free: Vec<usize> = (0..d).filter(|&i| bound[i] == Bound::Free).collect();
        let has_eq = free.iter().any(|&i| in_sum(i));

        let mut step = DVector::zeros(d);
        let mut lambda = None;
        if !free.is_empty() {
            let nf = free.len();
            let hff = DMatrix::from_fn(nf, nf, |a, b| h_mat[(free[a], free[b])]);
            let chol = hff.cholesky().ok_or_else(|| Error::Convergence {
                what: "active-set KKT factorization".into(),
                iterations: it,
                residual: f64::NAN,
            })?;
            let gf = DVector::from_fn(nf, |a, _| grad[free[a]]);
            let hinv_g = chol.solve(&gf);
            let p = if has_eq {
                let ef = DVector::from_fn(nf, |a, _| if in_sum(free[a]) { 1.0 } else { 0.0 });
                let hinv_e = chol.solve(&ef);
                let lam = -ef.dot(&hinv_g) / ef.dot(&hinv_e);
                lambda = Some(lam);
                -(hinv_g + hinv_e * lam)
            } else {
                -hinv_g
            };
            for (a, &i) in free.iter().enumerate() {
                step[i] = p[a];
            }
        }

        if step.amax() <= 1e-13 * (1.0 + x.amax()) {
            // stationary on the working set, check the bound multipliers
            let lam = match lambda {
                Some(l) => l,
                None => {
                    let mut lo = f64::NEG_INFINITY;
                    let mut hi = f64::INFINITY;
                    for i in (0..d).filter(|&i| in_sum(i)) {
                        match bound[i] {
                            Bound::Lower => lo = lo.max(-grad[i]),
                            Bound::Upper => hi = hi.min(-grad[i]),
                            Bound::Free => {}
                        }
                    }
                    match (lo.is_finite(), hi.is_finite()) {
                        (true, true) => 0.5 * (lo + hi),
                        (true, false) => lo,
                        (false, true) => hi,
                        (false, false) => 0.0,
                    }
                }
            };
            let mut worst = (0.0, None);
            for i in 0..d {
                let r = grad[i] + if in_sum(i) { lam } else { 0.0 };
                let mu = match bound[i] {
                    Bound::Lower => r,
                    Bound::Upper => -r,
                    Bound::Free => continue,
                };
                if mu < worst.0 {
                    worst = (mu, Some(i));
                }
            }
            match worst {
                (mu, Some(i)) if mu < -1e-11 * scale => bound[i] = Bound::Free,
                _ => {
                    return Ok(QpSolution {
                        x,
                        iterations: it,
                        method: InnerMethod::ActiveSet,
                    })
                }
            }
            continue;
        }

        let mut t = 1.0;
        let mut blocking = None;
        for &i in &free {
            let p = step[i];
            if p < 0.0 {
                let r = -x[i] / p;
                if r < t {
                    t = r;
                    blocking = Some((i, Bound::Lower));
                }
            } else if p > 0.0 && set.upper(i).is_finite() {
                let r = (set.upper(i) - x[i]) / p;
                if r < t {
                    t = r;
                    blocking = Some((i, Bound::Upper));
                }
            }
        }
        x += step * t.max(0.0);
        if let Some((i, b)) = blocking {
            bound[i] = b;
            x[i] = if b == Bound::Lower { 0.0 } else { set.upper(i) };
        }
    }
    Err(Error::Convergence {
        what: "active-set QP".into(),
        iterations: max_iter,
        residual: set.stationarity(h_mat, h_vec, &x),
    })
}

/// Accelerated projected gradient with adaptive restart; the independent
/// reference path and the fallback for the active-set method.
pub fn solve_projected_gradient(
    h_mat: &DMatrix<f64>,
    h_vec: &DVector<f64>,
    start: &DVector<f64>,
    set: &LiftedSet,
    tol: f64,
    max_iter: usize,
) -> Result<QpSolution> {
    let lip = h_mat.clone().symmetric_eigen().eigenvalues.max().max(1e-300);
    let step = 1.0 / lip;
    let mut x = set.project(start);
    let mut z = x.clone();
    let mut t = 1.0f64;
    let objective = |v: &DVector<f64>| 0.5 * v.dot(&(h_mat * v)) - h_vec.dot(v);
    let mut fx = objective(&x);
    for it in 0..max_iter {
        let grad = h_mat * &z - h_vec;
        let next = set.project(&(&z - grad * step));
        let fn_ = objective(&next);
        let moved = (&next - &x).norm();
        if fn_ > fx && t > 1.0 {
            // restart momentum
            z = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &next + (&next - &x) * ((t - 1.0) / t_next);
        t = t_next;
        x = next;
        fx = fn_;
        if moved <= tol * (1.0 + x.norm()) {
            return Ok(QpSolution {
                x,
                iterations: it + 1,
                method: InnerMethod::ProjectedGradient,
            });
        }
    }
    Err(Error::Convergence {
        what: "projected-gradient QP".into(),
        iterations: max_iter,
        residual: set.stationarity(h_mat, h_vec, &x),
    })
}
