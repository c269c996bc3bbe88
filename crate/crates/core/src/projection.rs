//! Projections onto the feasible correlation set `{R ⪰ 0, R_mm = c}`.
//!
//! Two independent routes are provided. [`project_to_feasible`] runs
//! Dykstra's alternating projections between the semidefinite cone and the
//! constant-diagonal affine set. [`project_feasible_newton`] solves the dual
//! of the same nearest-matrix problem with a semismooth Newton method; it is
//! far cheaper per call and is what the covariance solver uses inside its
//! gradient loop. The two are cross-checked in tests.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::C64;
use crate::pattern::CovarianceMatrix;

const DYKSTRA_MAX_ITER: usize = 20_000;
const DYKSTRA_TOL: f64 = 1e-13;
const NEWTON_MAX_ITER: usize = 100;

pub(crate) fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()).scale(0.5)
}

fn reconstruct(vectors: &DMatrix<C64>, values: &[f64]) -> DMatrix<C64> {
    let n = vectors.nrows();
    let mut scaled = vectors.clone();
    for (j, &lam) in values.iter().enumerate() {
        let s = C64::new(lam, 0.0);
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    hermitian_part(&(scaled * vectors.adjoint()))
}

/// Nearest positive semidefinite matrix in Frobenius norm (eigenvalue clipping).
pub fn project_psd(m: &DMatrix<C64>) -> DMatrix<C64> {
    let eig = hermitian_part(m).symmetric_eigen();
    let clipped: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    reconstruct(&eig.eigenvectors, &clipped)
}

fn set_diagonal(m: &mut DMatrix<C64>, c: f64) {
    for i in 0..m.nrows() {
        m[(i, i)] = C64::new(c, 0.0);
    }
}

fn validate_input(raw: &DMatrix<C64>, c: f64) -> Result<()> {
    if !raw.is_square() {
        return Err(Error::Dimension {
            context: "feasible projection",
            expected: raw.nrows(),
            actual: raw.ncols(),
        });
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Domain(format!("power must be positive, got {c}")));
    }
    Ok(())
}

/// Dykstra's alternating projections onto `{R ⪰ 0} ∩ {R_mm = c}`.
///
/// The input is Hermitian-symmetrized first. The affine set needs no
/// correction term, so only the cone step carries one.
pub fn project_to_feasible(raw: &DMatrix<C64>, c: f64) -> Result<CovarianceMatrix> {
    validate_input(raw, c)?;
    let mut x = hermitian_part(raw);
    let mut correction = DMatrix::<C64>::zeros(x.nrows(), x.ncols());
    let mut residual = f64::INFINITY;
    for _ in 0..DYKSTRA_MAX_ITER {
        let shifted = &x + &correction;
        let y = project_psd(&shifted);
        correction = shifted - &y;
        let mut next = y.clone();
        set_diagonal(&mut next, c);
        residual = (&next - &y).norm() + (&next - &x).norm();
        x = next;
        if residual <= DYKSTRA_TOL * x.norm().max(1.0) {
            return Ok(CovarianceMatrix::from_trusted(x, c));
        }
    }
    Err(Error::Convergence {
        what: "alternating projections".into(),
        iterations: DYKSTRA_MAX_ITER,
        residual,
    })
}

/// Dual Newton state kept between calls so that nearby projections start warm.
#[derive(Debug, Clone, Default)]
pub struct ProjectionWarmStart {
    shift: Option<DVector<f64>>,
}

/// Projection onto `{R ⪰ 0} ∩ {R_mm = c}` through the dual problem
///
/// `min_y ½‖Π₊(X + Diag y)‖² − c·1ᵀy`,
///
/// whose gradient is `diag(Π₊(X + Diag y)) − c`. The generalized Jacobian of
/// the eigenvalue clipping map gives quadratic local convergence. When the
/// solution is low rank the method can stall; the result is then feasible
/// but only approximately nearest.
pub fn project_feasible_newton(
    raw: &DMatrix<C64>,
    c: f64,
    warm: &mut ProjectionWarmStart,
) -> Result<DMatrix<C64>> {
    validate_input(raw, c)?;
    let x = hermitian_part(raw);
    let n = x.nrows();
    let mut y = match warm.shift.take() {
        Some(y) if y.len() == n => y,
        _ => DVector::from_fn(n, |i, _| c - x[(i, i)].re),
    };

    let tol = 1e-13 * c.max(1.0);
    let mut state = DualPoint::evaluate(&x, &y, c);
    for _ in 0..NEWTON_MAX_ITER {
        let grad_norm = state.grad.amax();
        if grad_norm <= tol {
            warm.shift = Some(y);
            let mut r = state.projected;
            set_diagonal(&mut r, c);
            return Ok(r);
        }
        let jac = state.jacobian();
        // Levenberg–Marquardt shift; the Jacobian is bounded by the identity
        let reg = grad_norm.clamp(1e-14, 0.1);
        let shifted = &jac + DMatrix::from_diagonal_element(n, n, reg);
        let dir = match shifted.clone().cholesky() {
            Some(ch) => -ch.solve(&state.grad),
            None => -&state.grad,
        };
        let slope = state.grad.dot(&dir);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial_y = &y + &dir * step;
            let trial = DualPoint::evaluate(&x, &trial_y, c);
            let armijo = trial.value <= state.value + 1e-4 * step * slope;
            if armijo || trial.grad.amax() <= 0.5 * grad_norm {
                accepted = Some((trial_y, trial));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((ny, ns)) => {
                y = ny;
                state = ns;
            }
            None => break,
        }
    }
    let grad_norm = state.grad.amax();
    warm.shift = Some(y);
    if grad_norm <= 1e-9 * c.max(1.0) {
        let mut r = state.projected;
        set_diagonal(&mut r, c);
        return Ok(r);
    }
    // Degenerate (low-rank) solutions make the Newton system singular and
    // progress linear. Rescaling the clipped iterate to the target diagonal
    // gives a feasible point close to the projection.
    let d: Vec<f64> = (0..n).map(|i| state.projected[(i, i)].re).collect();
    if d.iter().all(|&v| v > 1e-12 * c) {
        let mut r = DMatrix::from_fn(n, n, |i, j| {
            state.projected[(i, j)] * (c / (d[i] * d[j]).sqrt())
        });
        r = hermitian_part(&r);
        set_diagonal(&mut r, c);
        return Ok(r);
    }
    log::debug!("dual Newton stalled at residual {grad_norm:e}, using alternating projections");
    project_to_feasible(raw, c)
        .map(CovarianceMatrix::into_entries)
        .map_err(|e| match e {
            Error::Convergence { residual, .. } => Error::Convergence {
                what: "dual Newton projection".into(),
                iterations: NEWTON_MAX_ITER,
                residual,
            },
            other => other,
        })
}

struct DualPoint {
    value: f64,
    grad: DVector<f64>,
    projected: DMatrix<C64>,
    eigenvalues: Vec<f64>,
    vectors: DMatrix<C64>,
}

impl DualPoint {
    fn evaluate(x: &DMatrix<C64>, y: &DVector<f64>, c: f64) -> Self {
        let mut z = x.clone();
        for i in 0..z.nrows() {
            z[(i, i)] += C64::new(y[i], 0.0);
        }
        let n = z.nrows();
        let eig = z.symmetric_eigen();
        let eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let clipped: Vec<f64> = eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        let projected = reconstruct(&eig.eigenvectors, &clipped);
        let value = 0.5 * clipped.iter().map(|l| l * l).sum::<f64>() - c * y.sum();
        let grad = DVector::from_fn(n, |i, _| projected[(i, i)].re - c);
        Self {
            value,
            grad,
            projected,
            eigenvalues,
            vectors: eig.eigenvectors,
        }
    }

    /// `V_ab = Σ_ij Ω_ij Re(P_ai P̄_bi P̄_aj P_bj)`, the derivative of the
    /// diagonal of the clipped matrix with respect to the diagonal shift.
    fn jacobian(&self) -> DMatrix<f64> {
        let n = self.eigenvalues.len();
        let lam = &self.eigenvalues;
        let omega = DMatrix::from_fn(n, n, |i, j| {
            let (li, lj) = (lam[i], lam[j]);
            let (pi, pj) = (li.max(0.0), lj.max(0.0));
            if (li - lj).abs() > 1e-14 * (li.abs() + lj.abs()).max(1e-300) {
                (pi - pj) / (li - lj)
            } else if li > 0.0 {
                1.0
            } else {
                0.0
            }
        });
        let p = &self.vectors;
        let mut jac = DMatrix::<f64>::zeros(n, n);
        let mut u = vec![C64::new(0.0, 0.0); n];
        for a in 0..n {
            for b in 0..=a {
                for (i, ui) in u.iter_mut().enumerate() {
                    *ui = p[(a, i)] * p[(b, i)].conj();
                }
                let mut acc = 0.0;
                for i in 0..n {
                    let mut row = C64::new(0.0, 0.0);
                    for j in 0..n {
                        row += u[j] * omega[(i, j)];
                    }
                    acc += (u[i].conj() * row).re;
                }
                jac[(a, b)] = acc;
                jac[(b, a)] = acc;
            }
        }
        jac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(m: &[f64], n: usize) -> DMatrix<C64> {
        DMatrix::from_row_iterator(n, n, m.iter().map(|&v| C64::new(v, 0.0)))
    }

    #[test]
    fn feasible_input_is_a_fixed_point() {
        let m = real(&[1.0, 0.5, 0.2, 0.5, 1.0, 0.5, 0.2, 0.5, 1.0], 3);
        let out = project_to_feasible(&m, 1.0).unwrap();
        assert!((out.entries() - &m).norm() < 1e-9);
        let again = project_to_feasible(out.entries(), 1.0).unwrap();
        assert!((again.entries() - out.entries()).norm() < 1e-9);
    }

    #[test]
    fn negative_eigenvalue_is_clipped_then_diagonal_reset() {
        let m = real(&[-1.0, 0.0, 0.0, 3.0], 2);
        let out = project_to_feasible(&m, 1.0).unwrap();
        assert!((out.entries() - real(&[1.0, 0.0, 0.0, 1.0], 2)).norm() < 1e-12);
    }

    #[test]
    fn correlation_bound_holds_after_projection() {
        let m = real(&[1.0, 2.0, 2.0, 1.0], 2);
        let out = project_to_feasible(&m, 1.0).unwrap();
        assert!(out.entries()[(0, 1)].norm() <= 1.0 + 1e-9);
        CovarianceMatrix::new(out.entries().clone(), 1.0).unwrap();
    }

    #[test]
    fn non_square_input_is_rejected() {
        let m = DMatrix::<C64>::zeros(2, 3);
        assert!(matches!(
            project_to_feasible(&m, 1.0),
            Err(Error::Dimension { .. })
        ));
        let mut warm = ProjectionWarmStart::default();
        assert!(project_feasible_newton(&m, 1.0, &mut warm).is_err());
    }

    #[test]
    fn newton_and_dykstra_agree() {
        let n = 6;
        let m = DMatrix::from_fn(n, n, |i, j| {
            let s = (i * 5 + j * 3) as f64;
            C64::new((s * 0.37).sin() * 2.0, (s * 0.11).cos() - (i as f64 - j as f64) * 0.2)
        });
        let dyk = project_to_feasible(&m, 2.0).unwrap();
        let mut warm = ProjectionWarmStart::default();
        let newton = project_feasible_newton(&m, 2.0, &mut warm).unwrap();
        assert!((dyk.entries() - &newton).norm() < 1e-9);
        CovarianceMatrix::new(newton, 2.0).unwrap();
    }

    #[test]
    fn large_inputs_still_give_feasible_matrices() {
        for &scale in &[1e3, 1e4, 1e6] {
            let n = 5;
            let m = DMatrix::from_fn(n, n, |i, j| {
                let s = (i * 7 + j * 3) as f64;
                C64::new((s * 0.37).sin() * scale, (s * 0.11).cos() * scale)
            });
            let mut warm = ProjectionWarmStart::default();
            let r = project_feasible_newton(&m, 1.0, &mut warm).unwrap();
            CovarianceMatrix::new(r, 1.0).unwrap();
        }
    }
}
