use crate::error::{Error, Result};

/// `params - lr * grads`, elementwise.
pub fn sgd_step(params: &[f64], grads: &[f64], lr: f64) -> Result<Vec<f64>> {
    let mut out = params.to_vec();
    sgd_step_in_place(&mut out, grads, lr)?;
    Ok(out)
}

pub fn sgd_step_in_place(params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(format!(
            "{} parameters but {} gradient entries",
            params.len(),
            grads.len()
        )));
    }
    if !lr.is_finite() {
        return Err(Error::NonFinite(format!("learning rate {lr}")));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("parameters after step".into()));
    }
    Ok(())
}
