//! Exact matrices, spectra and analytic constructions.

pub mod iterate;
pub mod matrices;
pub mod parity_net;
pub mod quadrant;
pub mod svd;
pub mod whitening;

pub use iterate::{
    diverges, expected_iterate, expected_iterate_from, gd_linreg_error, gd_linreg_iteration_bound,
    iterate_distance_lower_bound, linearized_distance_bound,
};
pub use matrices::{
    build_u, build_u_exact, build_w, build_w_exact, uw_identity_deviation, write_matrix_csv,
};
pub use parity_net::{build_parity_network, parity_triads};
pub use quadrant::{arcsine_law, quadrant_correlation};
pub use svd::{condition_number, spectral_norm, svd, Spectrum};
pub use whitening::{correlation_of, estimate_c, whiten, windows, WhiteningOp};
