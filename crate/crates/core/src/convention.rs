//! Normalization conventions shared by every module.
//!
//! A field on a grid of `N` cells with cell volume `dV` and total volume
//! `V = N dV` is mapped to harmonic space with
//!
//! ```text
//! forward:  h(k) = dV * sum_x f(x) exp(-i k x)
//! inverse:  f(x) = (1 / V) * sum_k h(k) exp(+i k x)
//! ```
//!
//! so that `sum_x dV` approximates `∫dx` and `(1/V) sum_k` approximates
//! `∫dk / (2π)^D`. With a covariance that is diagonal in harmonic space,
//! `<h(k) h(k')*> = V δ_kk' P(k)`, the following quantities are fixed:
//!
//! * periodogram `p(k) = |h(k)|² / V`, an unbiased single-sample estimate of `P(k)`;
//! * the cell-space covariance matrix `C` acting on cell values has
//!   harmonic eigenvalues `λ(k) = P(k) / dV`;
//! * mode amplitudes for sampling are `h(k) = sqrt(V P(k)) z(k)` with `E|z|² = 1`.

/// Factor applied after an unnormalized forward DFT.
#[inline]
pub fn forward_scale(cell_volume: f64) -> f64 {
    cell_volume
}

/// Factor applied after an unnormalized inverse DFT.
#[inline]
pub fn inverse_scale(total_volume: f64) -> f64 {
    1.0 / total_volume
}

/// Periodogram from a harmonic coefficient.
#[inline]
pub fn periodogram(abs_sq: f64, total_volume: f64) -> f64 {
    abs_sq / total_volume
}

/// Harmonic eigenvalue of the cell-space covariance for spectral density `p`.
#[inline]
pub fn covariance_eigenvalue(p: f64, cell_volume: f64) -> f64 {
    p / cell_volume
}

/// Standard deviation of a harmonic coefficient for spectral density `p`.
#[inline]
pub fn mode_amplitude(p: f64, total_volume: f64) -> f64 {
    (total_volume * p).sqrt()
}

/// Largest spectral density value produced by the parameterization.
pub const SPECTRUM_CAP: f64 = 1e300;

/// Default cap on the side length of dense materializations.
pub const DEFAULT_DENSE_CAP: usize = 4096;
