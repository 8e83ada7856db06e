//! Signal-to-noise ratio of the end-to-end and the decomposition gradient
//! at initialization, for growing tuple sizes.

use graddiag::diagnostics::{snr_at_init, SnrConfig};
use graddiag::models::ImageScale;

fn main() -> graddiag::Result<()> {
    for k in 1..=4 {
        let mut cfg = SnrConfig::monte_carlo(k, 4000);
        cfg.scale = ImageScale::Small;
        cfg.pool_size = 400;
        cfg.inits = 3;
        let (avg, _) = snr_at_init(&cfg, 1)?;
        let show = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:8.3}"));
        println!(
            "k = {k}: ln SNR end-to-end {}  decomposition {}",
            show(avg.end_to_end.log_ratio),
            show(avg.decomposition.log_ratio)
        );
    }
    Ok(())
}
