//! Encoding piecewise-linear curves: a plain convolution against the same
//! convolution on whitened windows.

use graddiag::experiments::{run_pwl, PwlSpec, PwlVariant};

fn main() -> graddiag::Result<()> {
    let mut spec = PwlSpec::default();
    spec.n = 50;
    spec.variants = vec![PwlVariant::Conv, PwlVariant::ConvCond];
    spec.conv.iterations = 500;
    spec.conv.eval_every = 50;
    spec.conv_cond.eval_every = 50;
    spec.snapshots.clear();
    let out = run_pwl(&spec, 2)?;
    for run in &out.runs {
        println!("{}", run.variant.tag());
        for p in &run.record.series {
            println!(
                "  iteration {:>4}  filter error {:.3e}",
                p.iteration, p.eval_metric
            );
        }
        if let Some(f) = run.filter {
            println!("  learned filter [{:.4}, {:.4}, {:.4}]", f[0], f[1], f[2]);
        }
    }
    Ok(())
}
