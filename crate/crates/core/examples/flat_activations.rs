//! A step-function teacher learned four ways: smooth surrogate, deep
//! regressor, multiclass and the forward-only update.

use graddiag::experiments::{run_flat, FlatSpec, FlatVariant};

fn main() -> graddiag::Result<()> {
    let mut spec = FlatSpec::default();
    for v in FlatVariant::ALL {
        let c = spec.config_mut(v);
        c.iterations = 1500;
        c.eval_every = 250;
    }
    spec.bias_offsets = vec![0.0];
    // Shortened budget; the pass/fail checks are calibrated for the full one.
    let out = run_flat(&spec, 2)?;
    for run in &out.runs {
        let last = run.record.last().map_or(f64::NAN, |p| p.eval_metric);
        println!("{:<12} final eval {last:.4}", run.variant.tag());
    }
    Ok(())
}
