//! Spectral-density parameterization and SDE spectra.

use std::f64::consts::FRAC_PI_2;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::convention::{self, SPECTRUM_CAP};
use crate::error::{Error, Result};
use crate::grid::{KCoords, RegularGrid};
use crate::operators::{check_len, DiagonalHarmonicOp};

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_NU: f64 = FRAC_PI_2;

/// The unknowns `τ(k)`, `δ(k)` of `P(k) = exp(τ + tan δ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    grid: RegularGrid,
    tau: Vec<f64>,
    delta: Vec<f64>,
    epsilon: f64,
    nu: f64,
}

impl SpectralParams {
    /// Builds the parameters, clamping `δ` into `[−b, b]` with `b = π/2 − ε`.
    pub fn new(grid: &RegularGrid, tau: Vec<f64>, delta: Vec<f64>, epsilon: f64, nu: f64) -> Result<Self> {
        check_len(grid.size(), tau.len())?;
        check_len(grid.size(), delta.len())?;
        if !(epsilon > 0.0 && epsilon < FRAC_PI_2) {
            return Err(Error::InvalidArgument(format!("epsilon must lie in (0, π/2), got {epsilon}")));
        }
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::InvalidArgument(format!("nu must be positive, got {nu}")));
        }
        if let Some(i) = tau.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFinite(format!("tau at mode {i}")));
        }
        if delta.iter().any(|d| d.is_nan()) {
            return Err(Error::NonFinite("delta".into()));
        }
        let b = FRAC_PI_2 - epsilon;
        let delta = delta.into_iter().map(|d| d.clamp(-b, b)).collect();
        Ok(Self {
            grid: grid.clone(),
            tau,
            delta,
            epsilon,
            nu,
        })
    }

    /// `τ = 0`, `δ = 0` with default `ε` and `ν`.
    pub fn zeros(grid: &RegularGrid) -> Self {
        Self {
            grid: grid.clone(),
            tau: vec![0.0; grid.size()],
            delta: vec![0.0; grid.size()],
            epsilon: DEFAULT_EPSILON,
            nu: DEFAULT_NU,
        }
    }

    pub fn grid(&self) -> &RegularGrid {
        &self.grid
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Support bound `b = π/2 − ε` of `δ`.
    pub fn bound(&self) -> f64 {
        FRAC_PI_2 - self.epsilon
    }

    /// `τ + tan δ` per mode.
    pub fn log_spectrum(&self) -> Vec<f64> {
        self.tau.iter().zip(&self.delta).map(|(t, d)| t + d.tan()).collect()
    }

    /// `exp(τ + tan δ)`, capped at [`SPECTRUM_CAP`].
    pub fn spectrum(&self) -> Vec<f64> {
        let (p, capped) = capped_exp(&self.log_spectrum());
        if capped > 0 {
            log::warn!("spectral density capped at {SPECTRUM_CAP:e} on {capped} modes");
        }
        p
    }
}

pub(crate) fn capped_exp(log_p: &[f64]) -> (Vec<f64>, usize) {
    let cap_log = SPECTRUM_CAP.ln();
    let mut capped = 0;
    let p = log_p
        .iter()
        .map(|&l| {
            if l > cap_log {
                capped += 1;
                SPECTRUM_CAP
            } else {
                l.exp()
            }
        })
        .collect();
    (p, capped)
}

/// The spectral density `P(k)` as a harmonic multiplier.
///
/// The covariance of cell values is the same multiplier scaled by `1/dV`,
/// see [`cell_covariance`].
pub fn spectrum_from_params(p: &SpectralParams) -> Result<DiagonalHarmonicOp> {
    let spec = p.spectrum();
    if let Some(i) = spec.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::NonFinite(format!("spectral density at mode {i} is {}", spec[i])));
    }
    DiagonalHarmonicOp::new(&p.grid, spec)
}

/// The covariance `Φ` of cell values for spectral density `spectrum`.
pub fn cell_covariance(grid: &RegularGrid, spectrum: &[f64]) -> Result<DiagonalHarmonicOp> {
    let dv = grid.cell_volume();
    DiagonalHarmonicOp::new(
        grid,
        spectrum.iter().map(|&p| convention::covariance_eigenvalue(p, dv)).collect(),
    )
}

/// One term `coeff · Π_a ∂_a^{orders[a]}` of a linear differential operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdeTerm {
    pub orders: Vec<u32>,
    pub coeff: f64,
}

/// A linear constant-coefficient SDE `g(∂)φ = ξ` with white noise of spectrum `P_ξ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdeSpec {
    pub terms: Vec<SdeTerm>,
    #[serde(default = "unit_noise")]
    pub noise_spectrum: f64,
}

fn unit_noise() -> f64 {
    1.0
}

impl SdeSpec {
    pub fn new(terms: Vec<SdeTerm>) -> Self {
        Self {
            terms,
            noise_spectrum: 1.0,
        }
    }

    /// `α∂_t² + β∂_t + m²`.
    pub fn oscillator(alpha: f64, beta: f64, m2: f64) -> Self {
        Self::new(vec![
            SdeTerm { orders: vec![2], coeff: alpha },
            SdeTerm { orders: vec![1], coeff: beta },
            SdeTerm { orders: vec![0], coeff: m2 },
        ])
    }

    /// `α∂_t² − β∂_x² − γ∂_x − ρ∂_t + m²` with axis 0 time and axis 1 space.
    pub fn wave2d(alpha: f64, beta: f64, gamma: f64, rho: f64, m2: f64) -> Self {
        Self::new(vec![
            SdeTerm { orders: vec![2, 0], coeff: alpha },
            SdeTerm { orders: vec![0, 2], coeff: -beta },
            SdeTerm { orders: vec![0, 1], coeff: -gamma },
            SdeTerm { orders: vec![1, 0], coeff: -rho },
            SdeTerm { orders: vec![0, 0], coeff: m2 },
        ])
    }

    pub fn validate(&self, ndim: usize) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::InvalidArgument("SDE needs at least one term".into()));
        }
        for t in &self.terms {
            if t.orders.len() != ndim {
                return Err(Error::InvalidArgument(format!(
                    "SDE term has {} derivative orders for a {ndim}-dimensional grid",
                    t.orders.len()
                )));
            }
            if !t.coeff.is_finite() {
                return Err(Error::NonFinite("SDE coefficient".into()));
            }
        }
        if !(self.noise_spectrum.is_finite() && self.noise_spectrum > 0.0) {
            return Err(Error::InvalidArgument("noise spectrum must be positive".into()));
        }
        Ok(())
    }
}

/// Paper values of the damped oscillator: `(α, β, m²)`.
pub const OSCILLATOR_PARAMS: (f64, f64, f64) = (0.0003, 0.001, 0.5);
/// Paper values of the wave-like SDE: `(α, β, γ, ρ, m²)`.
pub const WAVE2D_PARAMS: (f64, f64, f64, f64, f64) = (0.00007, 0.0002, 0.0014, 0.0012, 0.1);

/// `f(k) = g(i k)` at every mode.
pub fn sde_char(spec: &SdeSpec, kc: &KCoords) -> Result<Vec<Complex64>> {
    let grid = kc.grid();
    spec.validate(grid.ndim())?;
    Ok((0..grid.size())
        .map(|flat| {
            let k = kc.k(flat);
            spec.terms
                .iter()
                .map(|t| {
                    t.orders
                        .iter()
                        .zip(&k)
                        .fold(Complex64::new(t.coeff, 0.0), |acc, (&o, &ka)| {
                            acc * Complex64::new(0.0, ka).powu(o)
                        })
                })
                .sum()
        })
        .collect())
}

/// `P(k) = P_ξ / |f(k)|²`.
pub fn sde_to_spectrum(spec: &SdeSpec, kc: &KCoords) -> Result<Vec<f64>> {
    let f = sde_char(spec, kc)?;
    f.iter()
        .enumerate()
        .map(|(mode, v)| {
            let a = v.norm_sqr();
            if a == 0.0 {
                Err(Error::SpectrumDiverges { mode })
            } else {
                Ok(spec.noise_spectrum / a)
            }
        })
        .collect()
}

/// Parameters `(m², α, β, γ, ρ)` of the highly structured spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuredParams {
    pub m2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub rho: f64,
}

impl Default for StructuredParams {
    fn default() -> Self {
        Self {
            m2: 1.1,
            alpha: 0.0025,
            beta: 0.0011,
            gamma: 0.002,
            rho: 0.004,
        }
    }
}

impl StructuredParams {
    pub fn eval(&self, omega: f64, k: f64) -> f64 {
        let a = self.m2 - (self.alpha * k * k - self.beta * omega * omega).sin();
        let b = self.gamma * k + self.rho * omega;
        2.0 / (a * a + b * b)
    }
}

/// The structured spectrum on a 2D grid with axis 0 frequency and axis 1 wavenumber.
pub fn structured_spectrum(kc: &KCoords, params: &StructuredParams) -> Result<Vec<f64>> {
    let grid = kc.grid();
    if grid.ndim() != 2 {
        return Err(Error::InvalidGrid("structured spectrum needs a 2D grid".into()));
    }
    (0..grid.size())
        .map(|flat| {
            let k = kc.k(flat);
            let v = params.eval(k[0], k[1]);
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                Err(Error::SpectrumDiverges { mode: flat })
            }
        })
        .collect()
}
