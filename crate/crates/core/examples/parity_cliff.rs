//! SGD on parities: low dimensions are learned, high ones stay at chance.
//!
//! `cargo run --release --example parity_cliff`

use graddiag::experiments::{run_parity, ParitySpec};

fn main() -> graddiag::Result<()> {
    let mut spec = ParitySpec::default();
    spec.dims = vec![4, 8, 16, 24];
    spec.train.iterations = 3000;
    spec.train.eval_every = 500;
    let out = run_parity(&spec, 2)?;
    for run in &out.runs {
        let acc = run.record.last().map_or(f64::NAN, |p| p.eval_metric);
        println!("d = {:>2}  held-out accuracy {acc:.3}", run.d);
    }
    Ok(())
}
