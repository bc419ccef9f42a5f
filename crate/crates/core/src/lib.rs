//! Spectral density inference for linear autonomous stochastic fields.
//!
//! The crate infers the spectral density `P(k) = exp(τ(k) + tan δ(k))` of a
//! Gaussian field from a complete realization or from masked, noisy data,
//! and reconstructs the field with a Wiener filter at the inferred spectrum.

pub mod convention;
pub mod error;
pub mod grid;
pub mod inference;
pub mod io;
mod linalg;
pub mod model;
pub mod operators;
pub mod priors;
pub mod synth;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Caps the threads used by dense factorizations; `1` runs sequentially.
pub fn set_parallelism(threads: usize) {
    let par = if threads <= 1 {
        faer::Par::Seq
    } else {
        faer::Par::rayon(threads)
    };
    faer::set_global_parallelism(par);
}
