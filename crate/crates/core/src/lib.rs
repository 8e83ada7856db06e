//! Failure modes of gradient-based learning at desk scale.
//!
//! [`engine`] differentiates small networks, [`datagen`] draws the synthetic
//! tasks, [`closedform`] and [`diagnostics`] hold the exact and measured
//! quantities, and [`experiments`] ties them to [`trainers`] as
//! reproducible sweeps. [`cli`] is the command-line front end.

pub mod cli;
pub mod closedform;
pub mod datagen;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod models;
pub mod plot;
pub mod rng;
pub mod stats;
pub mod trainers;

pub use error::{Error, Result};
