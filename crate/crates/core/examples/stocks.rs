//! Portfolio head trained with the full payoff vector against training on
//! the index of the best stock only.

use graddiag::experiments::{run_stocks, StocksSpec};

fn main() -> graddiag::Result<()> {
    let mut spec = StocksSpec::default();
    spec.ks = vec![10, 50];
    spec.d = 200;
    spec.train.iterations = 600;
    let out = run_stocks(&spec, 2)?;
    for run in &out.runs {
        println!(
            "k = {:>3}  {:<13} init noise ratio {:>7.2}  reaches {:.3} at {:?}",
            run.k,
            run.approach.tag(),
            run.init_noise_ratio,
            run.loss_threshold,
            run.iterations_to_threshold
        );
    }
    for k in &spec.ks {
        println!("k = {k}: speedup ratio {:?}", out.speedup_ratio(*k));
    }
    Ok(())
}
