use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::datagen::PwlCurve;
use crate::error::{Error, Result};

/// Correlation of the 3-tap windows `[f_{t-2}, f_{t-1}, f_t]` and its
/// inverse square root.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningOp {
    pub c: Matrix3<f64>,
    pub c_inv_sqrt: Matrix3<f64>,
    /// Ridge added to the diagonal before taking the root; 0 when none.
    pub regularization: f64,
    pub eigenvalues: [f64; 3],
}

/// Windows `[f_{t-2}, f_{t-1}, f_t]` for `t = 2..n`.
pub fn windows(curve: &PwlCurve) -> impl Iterator<Item = [f64; 3]> + '_ {
    curve.f.windows(3).map(|w| [w[0], w[1], w[2]])
}

impl WhiteningOp {
    pub fn from_correlation(c: Matrix3<f64>) -> Result<Self> {
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("correlation matrix".into()));
        }
        let c = (c + c.transpose()) * 0.5;
        let trace = c.trace();
        if !(trace > 0.0) {
            return Err(Error::RankDeficient {
                smallest: 0.0,
                largest: trace.max(0.0),
            });
        }
        let ridge = 1e-8 * trace / 3.0;
        let mut eig = SymmetricEigen::new(c);
        let mut regularization = 0.0;
        if eig.eigenvalues.min() <= ridge {
            regularization = ridge;
            eig = SymmetricEigen::new(c + Matrix3::identity() * ridge);
            if eig.eigenvalues.min() <= 0.0 {
                return Err(Error::RankDeficient {
                    smallest: eig.eigenvalues.min(),
                    largest: eig.eigenvalues.max(),
                });
            }
        }
        let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
        let c_inv_sqrt =
            eig.eigenvectors * Matrix3::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
        let mut ev = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
        ev.sort_by(|a, b| b.total_cmp(a));
        Ok(Self {
            c,
            c_inv_sqrt,
            regularization,
            eigenvalues: ev,
        })
    }

    /// Ratio of the extreme eigenvalues of `C`.
    pub fn condition_number(&self) -> f64 {
        self.eigenvalues[0] / self.eigenvalues[2]
    }

    pub fn apply(&self, row: [f64; 3]) -> [f64; 3] {
        let r = Vector3::from(row).transpose() * self.c_inv_sqrt;
        [r[0], r[1], r[2]]
    }

    /// Maps a filter learned on whitened rows back to raw rows:
    /// `(r C^{-1/2}) . w = r . (C^{-1/2} w)`.
    pub fn dewhiten_filter(&self, w: [f64; 3]) -> [f64; 3] {
        let f = self.c_inv_sqrt * Vector3::from(w);
        [f[0], f[1], f[2]]
    }
}

pub fn correlation_of(rows: &[[f64; 3]]) -> Result<Matrix3<f64>> {
    if rows.is_empty() {
        return Err(Error::invalid("no rows to estimate a correlation from"));
    }
    let mut c = Matrix3::zeros();
    for r in rows {
        let v = Vector3::from(*r);
        c += v * v.transpose();
    }
    Ok(c / rows.len() as f64)
}

/// `C_ij = E[f_{t-2+i} f_{t-2+j}]` averaged over every curve and window.
pub fn estimate_c(curves: &[PwlCurve]) -> Result<WhiteningOp> {
    let rows: Vec<[f64; 3]> = curves.iter().flat_map(windows).collect();
    if rows.len() < 3 {
        return Err(Error::invalid("need at least three windows to estimate C"));
    }
    WhiteningOp::from_correlation(correlation_of(&rows)?)
}

pub fn whiten(rows: &[[f64; 3]], op: &WhiteningOp) -> Vec<[f64; 3]> {
    rows.iter().map(|&r| op.apply(r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_roots() {
        let op = WhiteningOp::from_correlation(Matrix3::identity()).unwrap();
        assert!((op.c_inv_sqrt - Matrix3::identity()).norm() < 1e-14);
        let op =
            WhiteningOp::from_correlation(Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)))
                .unwrap();
        let want = Matrix3::from_diagonal(&Vector3::new(0.5, 1.0, 1.0));
        assert!((op.c_inv_sqrt - want).norm() < 1e-14);
        assert_eq!(op.regularization, 0.0);
        assert!((op.condition_number() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn singular_is_regularized() {
        let c = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0));
        let op = WhiteningOp::from_correlation(c).unwrap();
        assert!(op.regularization > 0.0);
        assert!(WhiteningOp::from_correlation(Matrix3::zeros()).is_err());
    }

    #[test]
    fn whitened_identity() {
        let c = Matrix3::new(5.0, 2.0, 1.0, 2.0, 3.0, 0.5, 1.0, 0.5, 2.0);
        let op = WhiteningOp::from_correlation(c).unwrap();
        let id = op.c_inv_sqrt * c * op.c_inv_sqrt;
        assert!((id - Matrix3::identity()).norm() <= 1e-6);
        let w = [0.3, -1.0, 2.0];
        let r = [1.0, 2.0, -0.5];
        let lhs: f64 = op.apply(r).iter().zip(&w).map(|(a, b)| a * b).sum();
        let rhs: f64 = r
            .iter()
            .zip(&op.dewhiten_filter(w))
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
