//! Tuples of line images labelled by the product of their slopes, trained
//! end to end and with intermediate supervision on the 16x16 variant.

use graddiag::experiments::{run_tuples, Approach, TuplesSpec};

fn main() -> graddiag::Result<()> {
    let mut spec = TuplesSpec::small();
    spec.ks = vec![1, 2];
    spec.end_to_end.iterations = 1500;
    spec.decomposition.iterations = 1500;
    spec.eval_size = 400;
    let out = run_tuples(&spec, 2)?;
    for k in &spec.ks {
        for a in [Approach::EndToEnd, Approach::Decomposition] {
            if let Some(acc) = out.final_accuracy(*k, a) {
                println!("k = {k}  {:<13} accuracy {acc:.3}", a.tag());
            }
        }
    }
    Ok(())
}
