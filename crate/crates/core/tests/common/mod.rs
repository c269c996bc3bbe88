#![allow(dead_code)]

use beamforge::geometry::C64;
use beamforge::pattern::CovarianceMatrix;
use nalgebra::DMatrix;
use rand::Rng;

/// Normalized Gram matrix of random complex vectors: Hermitian, PSD and
/// with every diagonal entry equal to `c`.
pub fn random_covariance<R: Rng>(rng: &mut R, m: usize, rank: usize, c: f64) -> CovarianceMatrix {
    let v = DMatrix::from_fn(m, rank, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let mut g = &v * v.adjoint();
    let d: Vec<f64> = (0..m).map(|i| g[(i, i)].re.sqrt()).collect();
    for i in 0..m {
        for j in 0..m {
            g[(i, j)] *= c / (d[i] * d[j]);
        }
        g[(i, i)] = C64::new(c, 0.0);
    }
    CovarianceMatrix::new(g, c).expect("normalized Gram matrix is feasible")
}

/// Random Hermitian direction with zero diagonal.
pub fn random_direction<R: Rng>(rng: &mut R, m: usize) -> DMatrix<C64> {
    let mut d = DMatrix::<C64>::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            d[(i, j)] = z;
            d[(j, i)] = z.conj();
        }
    }
    d
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
