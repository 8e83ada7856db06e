//! How little the gradient says about which target generated it: exact
//! variance over all parities, and the decay for products of sign targets.

use graddiag::diagnostics::{
    grad_variance_exact, parity_family, theorem3_exact_variance, theorem3_variance_estimate,
    InnerExpectation, InputSpace, SignFeaturePredictor,
};
use graddiag::engine::LossKind;
use graddiag::models::parity_learner;

fn main() -> graddiag::Result<()> {
    for d in [4, 6, 8] {
        let net = parity_learner(d, d as u64)?;
        let rep = grad_variance_exact(
            &net,
            &InputSpace::Hypercube { d },
            &parity_family(d)?,
            LossKind::Square,
        )?;
        println!(
            "d = {d}: variance {:.3e}, bound G^2/2^d = {:.3e}",
            rep.measured_variance, rep.bound
        );
    }

    let (d, features) = (50, 8);
    let predictor = SignFeaturePredictor::random(d, features, 3)?;
    for k in 1..=3 {
        let est = theorem3_variance_estimate(k, d, 500, InnerExpectation::Exact, &predictor, 11)?;
        println!(
            "k = {k}: ln variance {:.3} (+- {:.3e})",
            est.measured_variance.ln(),
            est.std_error.unwrap_or(0.0)
        );
    }
    println!(
        "closed form at k = 1: {:.3e}",
        theorem3_exact_variance(1, d, features)?
    );
    Ok(())
}
