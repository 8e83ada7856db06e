//! Measurement instruments: gradient variance, signal-to-noise ratios and
//! estimator noise, each reported next to the matching bound.

pub mod report;
pub mod snr;
pub mod stocks;
pub mod thm3;
pub mod variance;

pub use report::{config_hash, Provenance, Report};
pub use snr::{
    balanced_pool, estimate_snr, snr_at_init, ShadowF32, SnrAccumulator, SnrConfig, SnrPair,
    SnrReport, TupleSampling,
};
pub use stocks::{
    output_gradients, stocks_estimator_agreement, stocks_noise_ratio, stocks_shared_x_agreement,
    EstimatorAgreement, NoiseRatio,
};
pub use thm3::{
    sphere_projection_expectation, theorem3_exact_variance, theorem3_variance_estimate,
    InnerExpectation, SignFeaturePredictor,
};
pub use variance::{
    grad_variance_exact, parity_correlation, parity_family, parity_orthogonality_check, InputSpace,
    VarianceMethod, VarianceReport,
};
