use std::f64::consts::FRAC_2_PI;

use crate::error::{Error, Result};
use crate::stats::{dot, norm_sq};

/// `E[sign(w.x) sign(v.x)] = (2/pi) asin(w.v)` for unit `w`, `v` and
/// standard Gaussian `x`.
pub fn quadrant_correlation(w: &[f64], v: &[f64]) -> Result<f64> {
    if w.len() != v.len() {
        return Err(Error::shape("vectors differ in length"));
    }
    for (name, x) in [("w", w), ("v", v)] {
        if (norm_sq(x) - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("{name} is not a unit vector")));
        }
    }
    Ok(arcsine_law(dot(w, v)))
}

/// `(2/pi) asin(rho)` with `rho` clamped to `[-1, 1]`.
pub fn arcsine_law(rho: f64) -> f64 {
    FRAC_2_PI * rho.clamp(-1.0, 1.0).asin()
}
