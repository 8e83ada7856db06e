//! The integration matrix `W`, its exact inverse, how badly it is
//! conditioned and what that does to gradient descent on `U`.

use graddiag::closedform::{
    build_u, build_w, estimate_c, expected_iterate_from, iterate_distance_lower_bound,
    spectral_norm, svd, uw_identity_deviation,
};
use graddiag::datagen::gen_pwl_slope_pm1;

fn main() -> graddiag::Result<()> {
    println!("   n   kappa(W)      U W - I");
    for n in [10, 25, 50, 100] {
        let sp = svd(&build_w(n))?;
        println!(
            "{n:>4}  {:>10.3e}  {:>6}",
            sp.condition_number()?,
            uw_identity_deviation(n)
        );
    }

    let n = 30;
    let sp = svd(&build_w(n))?;
    let eta = 0.9 / (sp.s11() * sp.s11());
    for t in [10u64, 1_000, 100_000] {
        let eu = expected_iterate_from(&sp, eta, 1.0, t)?;
        let dist = spectral_norm(&(eu - build_u(n)))?;
        let lower = iterate_distance_lower_bound(&sp, eta, 1.0, t.saturating_sub(1))?;
        println!("t = {t:>6}: ||E U_t - U|| = {dist:.4} (closed-form bound {lower:.4})");
    }

    let curves: Vec<_> = (0..500)
        .map(|i| gen_pwl_slope_pm1(50, 3, i))
        .collect::<Result<_, _>>()?;
    let op = estimate_c(&curves)?;
    println!(
        "window correlation condition number at n = 50: {:.1}",
        op.condition_number()
    );
    Ok(())
}
