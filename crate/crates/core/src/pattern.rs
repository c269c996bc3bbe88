//! Cross-correlation matrices and the transmit beampattern they produce.
//!
//! The beampattern of a correlation matrix `R` toward `θ` is the real
//! quadratic form `P(θ) = a(θ)ᴴ R a(θ)`, optionally scaled by `1/(4π)` to
//! express it per steradian.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{ArrayGrid, SteeringVector, C64};

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-8;
pub const DIAG_TOL: f64 = 1e-8;

/// Hermitian positive semidefinite correlation matrix with constant diagonal `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    entries: DMatrix<C64>,
    diag_power: f64,
}

impl CovarianceMatrix {
    /// Validates Hermitian symmetry, semidefiniteness and the diagonal.
    pub fn new(entries: DMatrix<C64>, diag_power: f64) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::Dimension {
                context: "CovarianceMatrix::new",
                expected: entries.nrows(),
                actual: entries.ncols(),
            });
        }
        if !(diag_power.is_finite() && diag_power > 0.0) {
            return Err(Error::Domain(format!(
                "diagonal power must be positive, got {diag_power}"
            )));
        }
        let n = entries.nrows();
        for i in 0..n {
            if (entries[(i, i)].re - diag_power).abs() > DIAG_TOL
                || entries[(i, i)].im.abs() > HERMITIAN_TOL
            {
                return Err(Error::Invariant(format!(
                    "diagonal entry {i} is {} but must equal {diag_power}",
                    entries[(i, i)]
                )));
            }
            for j in 0..i {
                if (entries[(i, j)] - entries[(j, i)].conj()).norm() > HERMITIAN_TOL {
                    return Err(Error::Invariant(format!(
                        "matrix is not Hermitian at ({i}, {j})"
                    )));
                }
            }
        }
        let eig = entries.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if min < -PSD_TOL * max.max(1.0) {
            return Err(Error::Invariant(format!(
                "matrix is not positive semidefinite (min eigenvalue {min:e})"
            )));
        }
        Ok(Self {
            entries,
            diag_power,
        })
    }

    /// Caller guarantees the invariants (used for solver outputs that were just projected).
    pub(crate) fn from_trusted(entries: DMatrix<C64>, diag_power: f64) -> Self {
        debug_assert!(entries.is_square());
        Self {
            entries,
            diag_power,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn diag_power(&self) -> f64 {
        self.diag_power
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<C64> {
        self.entries
    }

    /// Principal submatrix on the given (sorted) indices.
    pub fn submatrix(&self, indices: &[usize]) -> Result<CovarianceMatrix> {
        let n = self.dim();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::Domain(format!("index {bad} out of range for dim {n}")));
        }
        let sub = DMatrix::from_fn(indices.len(), indices.len(), |i, j| {
            self.entries[(indices[i], indices[j])]
        });
        Ok(Self::from_trusted(sub, self.diag_power))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.entries.clone().symmetric_eigen().eigenvalues.min()
    }
}

/// One point of a beampattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeampatternSample {
    pub angle_rad: f64,
    pub power: f64,
}

/// Structured correlation matrices with well-known beampatterns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CanonicalKind {
    /// Fully coherent signals, `R = c · 11ᵀ`.
    PhasedArray,
    /// `R_kl = c · ρ^|k-l|`.
    ExpDecay(f64),
    /// Mutually uncorrelated signals, `R = c · I`.
    Orthogonal,
}

pub fn canonical_covariance(kind: CanonicalKind, dim: usize, c: f64) -> Result<CovarianceMatrix> {
    if dim == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Domain(format!("power must be positive, got {c}")));
    }
    let entries = match kind {
        CanonicalKind::PhasedArray => DMatrix::from_element(dim, dim, C64::new(c, 0.0)),
        CanonicalKind::Orthogonal => DMatrix::from_diagonal_element(dim, dim, C64::new(c, 0.0)),
        CanonicalKind::ExpDecay(rho) => {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::Domain(format!(
                    "correlation coefficient must lie in [0, 1), got {rho}"
                )));
            }
            DMatrix::from_fn(dim, dim, |k, l| {
                C64::new(c * rho.powi((k as i32 - l as i32).abs()), 0.0)
            })
        }
    };
    Ok(CovarianceMatrix::from_trusted(entries, c))
}

fn quad_form(r: &DMatrix<C64>, v: &DVector<C64>) -> C64 {
    v.dotc(&(r * v))
}

/// Beampattern `a(θ)ᴴ R a(θ)`, times `1/(4π)` when `solid_angle_norm` is set.
pub fn evaluate_pattern(
    r: &CovarianceMatrix,
    a: &SteeringVector,
    solid_angle_norm: bool,
) -> Result<f64> {
    check_dim("evaluate_pattern", r.dim(), a.len())?;
    let q = quad_form(r.entries(), a.entries());
    check_imag_residue(q)?;
    Ok(if solid_angle_norm { q.re / (4.0 * PI) } else { q.re })
}

fn check_imag_residue(q: C64) -> Result<()> {
    if q.im.abs() > 1e-9 * q.re.abs().max(1.0) {
        return Err(Error::Invariant(format!(
            "quadratic form has imaginary residue {:e}",
            q.im
        )));
    }
    Ok(())
}

/// Explicit double sum `Σ_k Σ_l R_kl exp(j 2π (z_l − z_k) sin θ)`.
///
/// Same quantity as [`evaluate_pattern`], computed entry by entry from the
/// positions without forming a steering vector. Used for cross-validation.
pub fn evaluate_pattern_direct(
    r: &CovarianceMatrix,
    grid: &ArrayGrid,
    angle_rad: f64,
    solid_angle_norm: bool,
) -> Result<f64> {
    check_dim("evaluate_pattern_direct", r.dim(), grid.len())?;
    crate::geometry::check_angle(angle_rad)?;
    let z = grid.positions();
    let s = angle_rad.sin();
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..z.len() {
        for l in 0..z.len() {
            let phase = 2.0 * PI * (z[l] - z[k]) * s;
            acc += r.entries()[(k, l)] * C64::new(phase.cos(), phase.sin());
        }
    }
    check_imag_residue(acc)?;
    Ok(if solid_angle_norm { acc.re / (4.0 * PI) } else { acc.re })
}

/// Pattern of `R` sampled on a list of angles.
pub fn sample_pattern(
    r: &CovarianceMatrix,
    grid: &ArrayGrid,
    angles_rad: &[f64],
    solid_angle_norm: bool,
) -> Result<Vec<BeampatternSample>> {
    angles_rad
        .iter()
        .map(|&t| {
            let a = crate::geometry::steering_vector(grid, t)?;
            Ok(BeampatternSample {
                angle_rad: t,
                power: evaluate_pattern(r, &a, solid_angle_norm)?,
            })
        })
        .collect()
}

/// `Re{R ⊙ conj(a aᴴ)}`, whose `g`-quadratic form is `(g⊙a)ᴴ R (g⊙a)`.
pub fn angle_coupling_block(r: &DMatrix<C64>, a: &DVector<C64>) -> DMatrix<f64> {
    let n = a.len();
    DMatrix::from_fn(n, n, |m, k| (r[(m, k)] * a[m].conj() * a[k]).re)
}

/// `Re{R ⊙ (a aᴴ)}` without the conjugate: the same block evaluated toward `-θ`.
pub fn angle_coupling_block_unconjugated(r: &DMatrix<C64>, a: &DVector<C64>) -> DMatrix<f64> {
    let n = a.len();
    DMatrix::from_fn(n, n, |m, k| (r[(m, k)] * a[m] * a[k].conj()).re)
}

/// JSON form of a complex matrix: `[re, im]` pairs in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrixJson {
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

impl From<&DMatrix<C64>> for ComplexMatrixJson {
    fn from(m: &DMatrix<C64>) -> Self {
        let mut entries = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                entries.push([m[(i, j)].re, m[(i, j)].im]);
            }
        }
        Self {
            dim: m.nrows(),
            entries,
        }
    }
}

impl ComplexMatrixJson {
    pub fn to_matrix(&self) -> Result<DMatrix<C64>> {
        check_dim("ComplexMatrixJson", self.dim * self.dim, self.entries.len())?;
        Ok(DMatrix::from_row_iterator(
            self.dim,
            self.dim,
            self.entries.iter().map(|&[re, im]| C64::new(re, im)),
        ))
    }
}
