use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;
const TOL: f64 = 1e-15;
const RANK_TOL: f64 = 1e-12;

/// `A = Q diag(s) V^T` with `s` sorted in decreasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub s: Vec<f64>,
    pub q: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl Spectrum {
    pub fn s11(&self) -> f64 {
        self.s[0]
    }

    pub fn snn(&self) -> f64 {
        self.s[self.s.len() - 1]
    }

    /// `S11^2 / Snn^2`, or an error when `Snn < 1e-12 S11`.
    pub fn condition_number(&self) -> Result<f64> {
        let (hi, lo) = (self.s11(), self.snn());
        if !(lo >= RANK_TOL * hi) || hi == 0.0 {
            return Err(Error::RankDeficient {
                smallest: lo,
                largest: hi,
            });
        }
        Ok((hi / lo).powi(2))
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut qs = self.q.clone();
        for (j, s) in self.s.iter().enumerate() {
            qs.column_mut(j).scale_mut(*s);
        }
        qs * self.v.transpose()
    }
}

/// Thin SVD by one-sided Jacobi rotations.
///
/// Columns of a working copy are orthogonalized pairwise until every pair
/// is orthogonal to relative precision; column norms are then the singular
/// values. Wide inputs are handled through their transpose.
pub fn svd(a: &DMatrix<f64>) -> Result<Spectrum> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svd input".into()));
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::shape("svd of an empty matrix"));
    }
    if a.nrows() < a.ncols() {
        let t = svd(&a.transpose())?;
        return Ok(Spectrum {
            s: t.s,
            q: t.v,
            v: t.q,
        });
    }
    let (m, n) = (a.nrows(), a.ncols());
    let mut u = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let (x, y) = (u[(i, p)], u[(i, q)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (u[(i, p)], u[(i, q)]);
                    u[(i, p)] = c * x - s * y;
                    u[(i, q)] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| u.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut q = DMatrix::zeros(m, n);
    let mut vs = DMatrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let sv = norms[src];
        s.push(sv);
        if sv > 0.0 {
            q.set_column(dst, &(u.column(src) / sv));
        }
        vs.set_column(dst, &v.column(src));
    }
    Ok(Spectrum { s, q, v: vs })
}

pub fn condition_number(a: &DMatrix<f64>) -> Result<f64> {
    svd(a)?.condition_number()
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> Result<f64> {
    Ok(svd(a)?.s11())
}
