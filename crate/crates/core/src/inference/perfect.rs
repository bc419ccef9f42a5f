use super::{smooth_signed, Likelihood, Posterior, PriorTerms, SpectralProblem};
use crate::error::{Error, Result};
use crate::grid::{fft_forward, Field, RegularGrid};
use crate::model::SpectralParams;
use crate::priors::SmoothnessHyper;

/// `½ Σ_k (p_k e^{−s_k} + s_k)` for a periodogram `p` of a fully observed field.
#[derive(Clone, Debug)]
pub struct PerfectLikelihood {
    grid: RegularGrid,
    periodogram: Vec<f64>,
}

impl PerfectLikelihood {
    pub fn new(phi: &Field) -> Self {
        Self {
            grid: phi.grid().clone(),
            periodogram: fft_forward(phi).periodogram(),
        }
    }

    pub fn periodogram(&self) -> &[f64] {
        &self.periodogram
    }
}

impl Likelihood for PerfectLikelihood {
    fn grid(&self) -> &RegularGrid {
        &self.grid
    }

    fn value(&self, log_p: &[f64]) -> Result<f64> {
        super::check_mode_len(&self.grid, log_p)?;
        Ok(0.5
            * self
                .periodogram
                .iter()
                .zip(log_p)
                .map(|(p, s)| p * (-s).exp() + s)
                .sum::<f64>())
    }

    fn value_and_gradient(&self, log_p: &[f64]) -> Result<(f64, Vec<f64>)> {
        super::check_mode_len(&self.grid, log_p)?;
        let mut h = 0.0;
        let g = self
            .periodogram
            .iter()
            .zip(log_p)
            .map(|(p, s)| {
                let r = p * (-s).exp();
                h += r + s;
                0.5 * (1.0 - r)
            })
            .collect();
        Ok((0.5 * h, g))
    }

    fn curvature(&self, log_p: &[f64]) -> Result<Vec<f64>> {
        super::check_mode_len(&self.grid, log_p)?;
        Ok(self
            .periodogram
            .iter()
            .zip(log_p)
            .map(|(p, s)| 0.5 * p * (-s).exp())
            .collect())
    }

    fn initial_log_spectrum(&self) -> Vec<f64> {
        let mean = self.periodogram.iter().sum::<f64>() / self.periodogram.len() as f64;
        let floor = (mean * 1e-12).max(f64::MIN_POSITIVE);
        let logs: Vec<f64> = self.periodogram.iter().map(|p| p.max(floor).ln()).collect();
        smooth_signed(&self.grid, &logs, 5)
    }
}

/// Spectral inference from a complete realization `φ`.
pub struct PerfectDataProblem {
    phi: Field,
    posterior: Posterior,
    params: SpectralParams,
}

impl PerfectDataProblem {
    pub fn new(phi: Field, hyper: &SmoothnessHyper, epsilon: f64, nu: f64) -> Result<Self> {
        let priors = PriorTerms::new(phi.grid(), hyper)?;
        Self::with_priors(phi, priors, epsilon, nu)
    }

    /// Keeps only the `ν` term of the prior, so the minimum is the log-periodogram.
    pub fn without_smoothness(phi: Field, epsilon: f64, nu: f64) -> Result<Self> {
        Self::with_priors(phi, PriorTerms::without_smoothness(), epsilon, nu)
    }

    fn with_priors(phi: Field, priors: PriorTerms, epsilon: f64, nu: f64) -> Result<Self> {
        let lik = PerfectLikelihood::new(&phi);
        let grid = phi.grid().clone();
        let params = SpectralParams::new(&grid, lik.initial_log_spectrum(), vec![0.0; grid.size()], epsilon, nu)?;
        Ok(Self {
            phi,
            posterior: Posterior::new(Box::new(lik), priors),
            params,
        })
    }

    pub fn phi(&self) -> &Field {
        &self.phi
    }
}

impl SpectralProblem for PerfectDataProblem {
    fn posterior(&self) -> &Posterior {
        &self.posterior
    }

    fn params(&self) -> &SpectralParams {
        &self.params
    }

    fn set_params(&mut self, params: SpectralParams) -> Result<()> {
        if params.grid() != self.phi.grid() {
            return Err(Error::GridMismatch);
        }
        self.params = params;
        Ok(())
    }
}

/// Perfect-data Hamiltonian at the problem's current parameters.
pub fn perfect_hamiltonian(prob: &PerfectDataProblem) -> Result<f64> {
    prob.hamiltonian()
}

/// Gradients of [`perfect_hamiltonian`] with respect to `τ` and `δ`.
pub fn perfect_gradient(prob: &PerfectDataProblem) -> Result<(Vec<f64>, Vec<f64>)> {
    prob.gradient()
}
