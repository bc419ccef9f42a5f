//! Information Hamiltonians of the spectral parameters, MAP estimation,
//! Laplace uncertainties and Wiener reconstruction.
//!
//! Every likelihood depends on the parameters only through the log spectrum
//! `s = τ + tan δ`, so a likelihood supplies its value and `∂/∂s`; the
//! `δ`-gradient follows by the chain rule with `1/cos²δ`.

mod curvature;
mod marginal;
mod optimize;
mod perfect;
mod wiener;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RegularGrid;
use crate::model::SpectralParams;
use crate::operators::check_len;
use crate::priors::{PriorPrecision, SmoothnessHyper};

pub use curvature::{curvature_uncertainty, CurvatureConfig, CurvatureUncertainty};
pub use marginal::{marginal_gradient, marginal_hamiltonian, MarginalLikelihood, NoisyDataProblem};
pub use optimize::{minimize_map, MapResult, OptimizerConfig};
pub use perfect::{perfect_gradient, perfect_hamiltonian, PerfectDataProblem, PerfectLikelihood};
pub use wiener::{wiener_reconstruct, Reconstruction, WienerConfig, WienerCovariance};

/// Note attached to every uncertainty estimate.
pub const UNDERESTIMATION_NOTE: &str = "Laplace and empirical-Bayes uncertainties neglect the \
     non-Gaussian posterior and the spectrum uncertainty; they underestimate the true error, \
     most strongly where the power is low";

/// A negative log-likelihood as a function of the log spectrum.
pub trait Likelihood: Send + Sync {
    fn grid(&self) -> &RegularGrid;

    fn value(&self, log_p: &[f64]) -> Result<f64>;

    fn value_and_gradient(&self, log_p: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// `∂²/∂s²` of the likelihood, exact or in expectation.
    fn curvature(&self, log_p: &[f64]) -> Result<Vec<f64>> {
        let (_, g) = self.value_and_gradient(log_p)?;
        Ok(g.iter().map(|gk| 0.5 * (1.0 - 2.0 * gk)).collect())
    }

    /// Data-driven starting point for the log spectrum.
    fn initial_log_spectrum(&self) -> Vec<f64>;
}

/// Prior part of the Hamiltonian.
#[derive(Clone)]
pub struct PriorTerms {
    smooth: Option<(PriorPrecision, PriorPrecision)>,
}

impl PriorTerms {
    pub fn new(grid: &RegularGrid, hyper: &SmoothnessHyper) -> Result<Self> {
        hyper.validate()?;
        Ok(Self {
            smooth: Some((
                PriorPrecision::new(grid, hyper.sigma, hyper.eta, hyper.backend)?,
                PriorPrecision::new(grid, hyper.mu, hyper.eta, hyper.backend)?,
            )),
        })
    }

    /// Only the `½ν⁻²δᵀδ` term.
    pub fn without_smoothness() -> Self {
        Self { smooth: None }
    }

    pub fn smoothness(&self) -> Option<&(PriorPrecision, PriorPrecision)> {
        self.smooth.as_ref()
    }

    pub fn energy(&self, p: &SpectralParams) -> f64 {
        let delta = p.delta();
        let ridge = 0.5 / (p.nu() * p.nu()) * delta.iter().map(|d| d * d).sum::<f64>();
        match &self.smooth {
            Some((t, m)) => t.energy(p.tau()) + m.energy(delta) + ridge,
            None => ridge,
        }
    }

    /// Gradients with respect to `τ` and `δ`.
    pub fn gradient(&self, p: &SpectralParams) -> (Vec<f64>, Vec<f64>) {
        let nu2 = 1.0 / (p.nu() * p.nu());
        let mut gd: Vec<f64> = p.delta().iter().map(|d| nu2 * d).collect();
        let gt = match &self.smooth {
            Some((t, m)) => {
                use crate::operators::LinOp;
                for (g, v) in gd.iter_mut().zip(m.apply(p.delta())) {
                    *g += v;
                }
                t.apply(p.tau())
            }
            None => vec![0.0; p.tau().len()],
        };
        (gt, gd)
    }
}

/// Likelihood plus priors over `(τ, δ)`.
pub struct Posterior {
    likelihood: Box<dyn Likelihood>,
    priors: PriorTerms,
}

impl Posterior {
    pub fn new(likelihood: Box<dyn Likelihood>, priors: PriorTerms) -> Self {
        Self { likelihood, priors }
    }

    pub fn grid(&self) -> &RegularGrid {
        self.likelihood.grid()
    }

    pub fn likelihood(&self) -> &dyn Likelihood {
        self.likelihood.as_ref()
    }

    pub fn priors(&self) -> &PriorTerms {
        &self.priors
    }

    fn check(&self, p: &SpectralParams) -> Result<()> {
        if p.grid() != self.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn hamiltonian(&self, p: &SpectralParams) -> Result<f64> {
        self.check(p)?;
        let h = self.likelihood.value(&p.log_spectrum())? + self.priors.energy(p);
        finite(h, "Hamiltonian")
    }

    /// Value with the gradients with respect to `τ` and `δ`.
    pub fn hamiltonian_and_gradient(&self, p: &SpectralParams) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        self.check(p)?;
        let (lik, gs) = self.likelihood.value_and_gradient(&p.log_spectrum())?;
        let (mut gt, mut gd) = self.priors.gradient(p);
        for (k, g) in gs.iter().enumerate() {
            gt[k] += g;
            let c = p.delta()[k].cos();
            gd[k] += g / (c * c);
        }
        let h = finite(lik + self.priors.energy(p), "Hamiltonian")?;
        Ok((h, gt, gd))
    }
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// A posterior together with the current parameter state.
pub trait SpectralProblem {
    fn posterior(&self) -> &Posterior;

    fn params(&self) -> &SpectralParams;

    fn set_params(&mut self, params: SpectralParams) -> Result<()>;

    fn hamiltonian(&self) -> Result<f64> {
        self.posterior().hamiltonian(self.params())
    }

    fn gradient(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let (_, gt, gd) = self.posterior().hamiltonian_and_gradient(self.params())?;
        Ok((gt, gd))
    }
}

/// Zeroes gradient components that would push `δ` past its bound.
pub fn project_gradient(p: &SpectralParams, grad_delta: &mut [f64]) {
    let b = p.bound();
    for (g, d) in grad_delta.iter_mut().zip(p.delta()) {
        if (*d >= b && *g < 0.0) || (*d <= -b && *g > 0.0) {
            *g = 0.0;
        }
    }
}

/// Hyper-parameters of one inference run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceHyper {
    #[serde(flatten)]
    pub smoothness: SmoothnessHyper,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_nu() -> f64 {
    crate::model::DEFAULT_NU
}

fn default_epsilon() -> f64 {
    crate::model::DEFAULT_EPSILON
}

/// Smooths a mode function with a moving average of `width` along every
/// axis in signed-index order, truncated at the ends.
pub(crate) fn smooth_signed(grid: &RegularGrid, values: &[f64], width: usize) -> Vec<f64> {
    let half = (width / 2) as i64;
    let mut cur = values.to_vec();
    let strides = grid.strides();
    for a in 0..grid.ndim() {
        let n = grid.axes()[a].n_points as i64;
        let mut next = vec![0.0; cur.len()];
        for (flat, out) in next.iter_mut().enumerate() {
            let idx = grid.unravel(flat);
            let m = grid.signed_index(a, idx[a]);
            let lo = (m - half).max(-n / 2);
            let hi = (m + half).min(n / 2 - 1);
            let base = flat - idx[a] * strides[a];
            let mut acc = 0.0;
            for mm in lo..=hi {
                acc += cur[base + grid.position_of(a, mm) * strides[a]];
            }
            *out = acc / (hi - lo + 1) as f64;
        }
        cur = next;
    }
    cur
}

pub(crate) fn check_mode_len(grid: &RegularGrid, v: &[f64]) -> Result<()> {
    check_len(grid.size(), v.len())
}
