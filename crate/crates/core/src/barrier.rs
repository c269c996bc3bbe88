//! Log-determinant barrier method for the support-block covariance problem
//!
//! `min_S Σ_k w_k (β_kᴴ S β_k − α* p_k)²`, `S ⪰ 0`, `S_ii = c`,
//!
//! with `α*` eliminated in closed form, which leaves `F(S) = qᵀ Q q` for the
//! forms `q_k = β_kᴴ S β_k` and `Q = W − W p pᵀ W / (pᵀ W p)`. Each centering
//! step is an equality-constrained Newton step on `t F(S) − log det S`,
//! computed in whichever of two equivalent forms has the smaller system:
//!
//! - over the `n (n − 1)` real off-diagonal parameters of `S`;
//! - over the `K + n` coefficients `(z, ν)` of the step shape
//!   `Δ = S − S (Σ_k z_k β_k β_kᴴ + Diag ν) S`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::C64;

const GROWTH: f64 = 10.0;
const CENTERING_TOL: f64 = 1e-9;
const MAX_NEWTON: usize = 3000;
const STAGE_NEWTON: usize = 60;

pub(crate) struct BarrierOutcome {
    pub block: DMatrix<C64>,
    pub objective: f64,
    pub alpha: f64,
    pub newton_steps: usize,
    pub gap: f64,
    pub trace: Vec<f64>,
}

pub(crate) struct BlockLeastSquares<'a> {
    pub beta: &'a DMatrix<C64>,
    pub weights: &'a [f64],
    pub target: &'a [f64],
}

struct Model<'a> {
    beta: &'a DMatrix<C64>,
    w: DVector<f64>,
    p: DVector<f64>,
    wp: DVector<f64>,
    energy: f64,
    c: f64,
}

impl<'a> Model<'a> {
    fn new(ls: &BlockLeastSquares<'a>, c: f64) -> Self {
        let w = DVector::from_column_slice(ls.weights);
        let p = DVector::from_column_slice(ls.target);
        let wp = w.component_mul(&p);
        let energy = wp.dot(&p);
        Self {
            beta: ls.beta,
            w,
            p,
            wp,
            energy,
            c,
        }
    }

    fn n(&self) -> usize {
        self.beta.nrows()
    }

    fn k(&self) -> usize {
        self.beta.ncols()
    }

    /// `S β_k` as columns.
    fn images(&self, s: &DMatrix<C64>) -> DMatrix<C64> {
        s * self.beta
    }

    fn forms(&self, images: &DMatrix<C64>) -> DVector<f64> {
        DVector::from_fn(self.k(), |j, _| self.beta.column(j).dotc(&images.column(j)).re)
    }

    fn q_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = self.w.component_mul(v);
        if self.energy > 0.0 {
            out -= &self.wp * (self.wp.dot(v) / self.energy);
        }
        out
    }

    fn alpha(&self, q: &DVector<f64>) -> f64 {
        if self.energy > 0.0 {
            (self.wp.dot(q) / self.energy).max(0.0)
        } else {
            0.0
        }
    }

    fn objective(&self, q: &DVector<f64>) -> (f64, f64) {
        let alpha = self.alpha(q);
        let f = (0..q.len())
            .map(|j| {
                let r = q[j] - alpha * self.p[j];
                self.w[j] * r * r
            })
            .sum();
        (f, alpha)
    }
}

/// `log det S` and `S⁻¹`, or `None` unless `S` is positive definite. Works on
/// the real embedding `[[Re S, −Im S], [Im S, Re S]]`, whose determinant is
/// `det(S)²`; a complex Cholesky would take square roots of negative pivots.
fn log_det(s: &DMatrix<C64>) -> Option<(f64, DMatrix<C64>)> {
    let n = s.nrows();
    let emb = DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let v = s[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    });
    let chol = emb.cholesky()?;
    let l = chol.l_dirty();
    let mut ld = 0.0;
    for i in 0..2 * n {
        ld += l[(i, i)].ln();
    }
    let inv = chol.inverse();
    let y = DMatrix::from_fn(n, n, |i, j| C64::new(inv[(i, j)], inv[(i + n, j)]));
    Some((ld, y))
}

struct Point {
    s: DMatrix<C64>,
    images: DMatrix<C64>,
    q: DVector<f64>,
    f: f64,
    alpha: f64,
    log_det: f64,
    inv: DMatrix<C64>,
}

impl Point {
    fn new(model: &Model<'_>, mut s: DMatrix<C64>) -> Option<Self> {
        for i in 0..s.nrows() {
            s[(i, i)] = C64::new(model.c, 0.0);
        }
        let (log_det, inv) = log_det(&s)?;
        let images = model.images(&s);
        let q = model.forms(&images);
        let (f, alpha) = model.objective(&q);
        Some(Self {
            s,
            images,
            q,
            f,
            alpha,
            log_det,
            inv,
        })
    }

    fn merit(&self, t: f64) -> f64 {
        t * self.f - self.log_det
    }
}

/// Off-diagonal parametrization: `q = q0 + L x` with the real and imaginary
/// parts of the upper triangle as `x`.
struct Pairs {
    pairs: Vec<(usize, usize)>,
    lin: DMatrix<f64>,
    /// `2 Lᵀ Q L`
    hess: DMatrix<f64>,
}

impl Pairs {
    fn new(model: &Model<'_>) -> Self {
        let (n, k) = (model.n(), model.k());
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
            .collect();
        let mut lin = DMatrix::zeros(k, 2 * pairs.len());
        for j in 0..k {
            let col = model.beta.column(j);
            for (pi, &(a, b)) in pairs.iter().enumerate() {
                let z = col[a].conj() * col[b];
                lin[(j, 2 * pi)] = 2.0 * z.re;
                lin[(j, 2 * pi + 1)] = -2.0 * z.im;
            }
        }
        let mut ql = DMatrix::zeros(k, lin.ncols());
        for col in 0..lin.ncols() {
            ql.set_column(col, &model.q_apply(&lin.column(col).into_owned()));
        }
        let hess = lin.transpose() * ql * 2.0;
        Self { pairs, lin, hess }
    }

    fn step(&self, model: &Model<'_>, x: &Point, t: f64) -> Option<(DMatrix<C64>, f64)> {
        let d = 2 * self.pairs.len();
        let y = &x.inv;
        let mut grad = self.lin.transpose() * model.q_apply(&x.q) * (2.0 * t);
        for (pi, &(a, b)) in self.pairs.iter().enumerate() {
            grad[2 * pi] -= 2.0 * y[(a, b)].re;
            grad[2 * pi + 1] -= 2.0 * y[(a, b)].im;
        }
        // tr(Y E_i Y E_j) with E = s e_a e_bᵀ + s̄ e_b e_aᵀ, s ∈ {1, j}
        let unit = [C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
        let mut hb = DMatrix::zeros(d, d);
        for (pi, &(a, b)) in self.pairs.iter().enumerate() {
            for (pj, &(c, e)) in self.pairs.iter().enumerate().take(pi + 1) {
                let t1 = y[(b, c)] * y[(e, a)];
                let t2 = y[(b, e)] * y[(c, a)];
                let t3 = y[(a, c)] * y[(e, b)];
                let t4 = y[(a, e)] * y[(c, b)];
                for (ui, si) in unit.iter().enumerate() {
                    for (uj, sj) in unit.iter().enumerate() {
                        let v = si * sj * t1
                            + si * sj.conj() * t2
                            + si.conj() * sj * t3
                            + si.conj() * sj.conj() * t4;
                        let (r, col) = (2 * pi + ui, 2 * pj + uj);
                        hb[(r, col)] = v.re;
                        hb[(col, r)] = v.re;
                    }
                }
            }
        }
        let h = &self.hess * t + hb;
        let dx = match h.clone().cholesky() {
            Some(ch) => -ch.solve(&grad),
            None => {
                let ridge = 1e-12 * h.diagonal().amax().max(1e-300);
                let shifted = h + DMatrix::from_diagonal_element(d, d, ridge);
                -shifted.cholesky()?.solve(&grad)
            }
        };
        let decrement = -grad.dot(&dx);
        let mut dir = DMatrix::zeros(model.n(), model.n());
        for (pi, &(a, b)) in self.pairs.iter().enumerate() {
            let v = C64::new(dx[2 * pi], dx[2 * pi + 1]);
            dir[(a, b)] = v;
            dir[(b, a)] = v.conj();
        }
        Some((dir, decrement))
    }
}

/// Newton direction and decrement at `x` for barrier weight `t`, through the
/// `K + n` step coefficients.
fn newton_step(model: &Model<'_>, x: &Point, t: f64) -> Option<(DMatrix<C64>, f64)> {
    let (n, k) = (model.n(), model.k());
    let cross = model.beta.adjoint() * &x.images;
    let m_aa = cross.map(|v| v.norm_sqr());
    let m_ad = DMatrix::from_fn(k, n, |a, j| x.images[(j, a)].norm_sqr());
    let m_dd = x.s.map(|v| v.norm_sqr());

    let mut lhs = DMatrix::<f64>::zeros(k + n, k + n);
    let scale = 2.0 * t;
    for col in 0..k {
        let qa = model.q_apply(&m_aa.column(col).into_owned()) * scale;
        for row in 0..k {
            lhs[(row, col)] = qa[row];
        }
        lhs[(col, col)] += 1.0;
    }
    for col in 0..n {
        let qa = model.q_apply(&m_ad.column(col).into_owned()) * scale;
        for row in 0..k {
            lhs[(row, k + col)] = qa[row];
        }
    }
    for row in 0..n {
        for col in 0..k {
            lhs[(k + row, col)] = m_ad[(col, row)];
        }
        for col in 0..n {
            lhs[(k + row, k + col)] = m_dd[(row, col)];
        }
    }
    let qq = model.q_apply(&x.q);
    let mut rhs = DVector::zeros(k + n);
    rhs.rows_mut(0, k).copy_from(&(&qq * (2.0 * scale)));
    rhs.rows_mut(k, n).fill(model.c);

    let sol = lhs.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let z = sol.rows(0, k);
    let nu = sol.rows(k, n);

    let mut pz = x.images.clone();
    for j in 0..k {
        pz.column_mut(j).scale_mut(z[j]);
    }
    let mut sn = x.s.clone();
    for j in 0..n {
        sn.column_mut(j).scale_mut(nu[j]);
    }
    let mut dir = &x.s - pz * x.images.adjoint() - &sn * &x.s;
    dir = (&dir + dir.adjoint()) * C64::new(0.5, 0.0);
    for i in 0..n {
        dir[(i, i)] = C64::new(0.0, 0.0);
    }

    // ∇φ = Σ_k 2t (Qq)_k β_k β_kᴴ − S⁻¹, decrement = −⟨∇φ, Δ⟩
    let mut bq = model.beta.clone();
    for j in 0..k {
        bq.column_mut(j).scale_mut(scale * qq[j]);
    }
    let grad = bq * model.beta.adjoint() - &x.inv;
    let decrement = -grad.iter().zip(dir.iter()).map(|(g, d)| (g.conj() * d).re).sum::<f64>();
    Some((dir, decrement))
}

/// `start` must be feasible; it is pulled halfway toward `c I` to obtain a
/// strictly interior point.
pub(crate) fn minimize_block_barrier(
    ls: &BlockLeastSquares<'_>,
    start: &DMatrix<C64>,
    c: f64,
    gap_rel: f64,
) -> Result<BarrierOutcome> {
    let model = Model::new(ls, c);
    let n = model.n();
    let eye = DMatrix::from_diagonal_element(n, n, C64::new(c, 0.0));
    let interior = (start + &eye) * C64::new(0.5, 0.0);
    let mut x = Point::new(&model, interior)
        .ok_or_else(|| Error::Invariant("barrier start point is not positive definite".into()))?;
    let mut trace = vec![x.f];
    if n <= 1 {
        return Ok(BarrierOutcome {
            objective: x.f,
            alpha: x.alpha,
            block: x.s,
            newton_steps: 0,
            gap: 0.0,
            trace,
        });
    }

    let pairs = (n * (n - 1) <= model.k() + n).then(|| Pairs::new(&model));
    let nf = n as f64;
    let floor = 1e-15 * x.f.max(1e-300);
    let mut t = if x.f > 0.0 { nf / x.f } else { 1.0 };
    let mut steps = 0;
    loop {
        // centering; at large t rounding limits how far the decrement can drop
        for _ in 0..STAGE_NEWTON {
            let step = match &pairs {
                Some(p) => p.step(&model, &x, t),
                None => newton_step(&model, &x, t),
            };
            let Some((dir, decrement)) = step else {
                break;
            };
            if decrement <= 2.0 * CENTERING_TOL {
                break;
            }
            steps += 1;
            if steps > MAX_NEWTON {
                return Err(Error::Convergence {
                    what: "barrier Newton".into(),
                    iterations: MAX_NEWTON,
                    residual: nf / t,
                });
            }
            let phi = x.merit(t);
            let slack = 1e-13 * (t * x.f).abs().max(x.log_det.abs());
            let mut s = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let trial = &x.s + &dir * C64::new(s, 0.0);
                if let Some(pt) = Point::new(&model, trial) {
                    if pt.merit(t) <= phi - 0.25 * s * decrement + slack {
                        accepted = Some(pt);
                        break;
                    }
                }
                s *= 0.5;
            }
            let Some(pt) = accepted else {
                break;
            };
            let progress = phi - pt.merit(t);
            x = pt;
            if progress <= 1e-14 * (t * x.f).abs().max(x.log_det.abs()) {
                break;
            }
        }
        trace.push(x.f);
        let gap = nf / t;
        if gap <= gap_rel * x.f || gap <= floor || t > 1e18 {
            return Ok(BarrierOutcome {
                objective: x.f,
                alpha: x.alpha,
                block: x.s,
                newton_steps: steps,
                gap,
                trace,
            });
        }
        t *= GROWTH;
    }
}
