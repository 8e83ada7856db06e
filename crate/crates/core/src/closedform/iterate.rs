use nalgebra::DMatrix;

use super::matrices::build_w;
use super::svd::{svd, Spectrum};
use crate::error::{Error, Result};

fn check_rates(eta: f64, lambda: f64) -> Result<()> {
    if !(eta > 0.0 && lambda > 0.0 && eta.is_finite() && lambda.is_finite()) {
        return Err(Error::invalid("eta and lambda must be positive and finite"));
    }
    Ok(())
}

/// `(1 - x)^t` for integer `t`, accurate for small `x`.
fn pow_one_minus(x: f64, t: u64) -> f64 {
    if x < 1.0 {
        (t as f64 * (-x).ln_1p()).exp()
    } else if t <= i32::MAX as u64 {
        (1.0 - x).powi(t as i32)
    } else {
        (1.0 - x).powf(t as f64)
    }
}

/// `sum_{i<t} (1 - x)^i`.
fn geometric(x: f64, t: u64) -> f64 {
    if x == 0.0 {
        t as f64
    } else if x < 1.0 {
        -(t as f64 * (-x).ln_1p()).exp_m1() / x
    } else {
        (1.0 - pow_one_minus(x, t)) / x
    }
}

/// `E U_t = eta lambda W^T sum_{i<t} (I - eta lambda W W^T)^i` evaluated as
/// `V diag(eta lambda s_j g_j) Q^T` from `W = Q S V^T`.
pub fn expected_iterate_from(sp: &Spectrum, eta: f64, lambda: f64, t: u64) -> Result<DMatrix<f64>> {
    check_rates(eta, lambda)?;
    let el = eta * lambda;
    let mut vd = sp.v.clone();
    for (j, &s) in sp.s.iter().enumerate() {
        let g = geometric(el * s * s, t);
        vd.column_mut(j).scale_mut(el * s * g);
    }
    Ok(vd * sp.q.transpose())
}

pub fn expected_iterate(n: usize, eta: f64, lambda: f64, t: u64) -> Result<DMatrix<f64>> {
    let sp = svd(&build_w(n))?;
    expected_iterate_from(&sp, eta, lambda, t)
}

/// True when `eta lambda S11^2 >= 1`.
pub fn diverges(sp: &Spectrum, eta: f64, lambda: f64) -> bool {
    eta * lambda * sp.s11() * sp.s11() >= 1.0
}

/// `max_j (1 - eta lambda S_jj^2)^(t+1) / S_jj`, the spectral distance
/// between `E U_{t+1}` and `W^{-1}`.
pub fn iterate_distance_lower_bound(sp: &Spectrum, eta: f64, lambda: f64, t: u64) -> Result<f64> {
    check_rates(eta, lambda)?;
    if diverges(sp, eta, lambda) {
        return Err(Error::Divergent(format!(
            "eta*lambda*S11^2 = {} >= 1",
            eta * lambda * sp.s11() * sp.s11()
        )));
    }
    Ok(sp
        .s
        .iter()
        .map(|&s| pow_one_minus(eta * lambda * s * s, t + 1) / s)
        .fold(0.0, f64::max))
}

/// First-order form `Snn^{-1} (1 - (t+1) eta lambda Snn^2)`.
pub fn linearized_distance_bound(sp: &Spectrum, eta: f64, lambda: f64, t: u64) -> f64 {
    let snn = sp.snn();
    (1.0 - (t + 1) as f64 * eta * lambda * snn * snn) / snn
}

/// Squared error `||w* - w_{t+1}||^2 = sum_j ((1 - eta D_j)^(t+1) v*_j)^2` of
/// full-batch gradient descent from zero on a least-squares problem whose
/// covariance has eigenvalues `d` and whose solution has eigenbasis
/// coordinates `v_star`.
pub fn gd_linreg_error(d: &[f64], v_star: &[f64], eta: f64, t: u64) -> Result<f64> {
    if d.len() != v_star.len() {
        return Err(Error::shape(
            "eigenvalues and coefficients differ in length",
        ));
    }
    if d.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::invalid("eigenvalues must be positive"));
    }
    Ok(d.iter()
        .zip(v_star)
        .map(|(&dj, &vj)| {
            let shrink = pow_one_minus(eta * dj, t + 1);
            (shrink * vj).powi(2)
        })
        .sum())
}

/// Steps `(D11/Dnn) ln(||w*|| / eps)` after which `eta = 1/D11` guarantees
/// error at most `eps`.
pub fn gd_linreg_iteration_bound(d11: f64, dnn: f64, w_norm: f64, eps: f64) -> f64 {
    (d11 / dnn) * (w_norm / eps).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_steps() {
        let z = expected_iterate(6, 0.01, 0.5, 0).unwrap();
        assert!(z.iter().all(|&v| v.abs() < 1e-15));
        let one = expected_iterate(6, 0.01, 0.5, 1).unwrap();
        let want = build_w(6).transpose() * 0.005;
        assert!((one - want).norm() < 1e-13);
    }

    #[test]
    fn boundary_diverges() {
        let sp = svd(&build_w(10)).unwrap();
        let eta = 1.0 / (sp.s11() * sp.s11());
        assert!(diverges(&sp, eta, 1.0));
        assert!(iterate_distance_lower_bound(&sp, eta, 1.0, 3).is_err());
        assert!(!diverges(&sp, 0.5 * eta, 1.0));
    }

    #[test]
    fn isotropic_linreg() {
        let e = gd_linreg_error(&[1.0; 3], &[1.0, 2.0, 2.0], 0.3, 4).unwrap();
        assert!((e - 0.7f64.powi(10) * 9.0).abs() < 1e-14);
    }

    #[test]
    fn slow_direction_keeps_error() {
        let d = [100.0, 1.0];
        let t = 40;
        assert!((t + 1) as f64 <= 0.5 * d[0] / d[1]);
        let e = gd_linreg_error(&d, &[0.0, 1.0], 1.0 / d[0], t)
            .unwrap()
            .sqrt();
        assert!(e >= 0.5);
    }
}
