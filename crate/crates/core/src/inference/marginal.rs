use faer::Mat;
use rustfft::num_complex::Complex64;
use rustfft::FftDirection;

use super::{smooth_signed, Likelihood, Posterior, PriorTerms, SpectralProblem};
use crate::convention::{self, DEFAULT_DENSE_CAP};
use crate::error::{Error, Result};
use crate::grid::{fft_nd, RegularGrid};
use crate::linalg::Cholesky;
use crate::model::SpectralParams;
use crate::operators::{check_len, LinOp, MaskResponseOp, ScaledIdentityOp};
use crate::priors::SmoothnessHyper;

/// Negative log-evidence of masked data with white noise, as a function of the
/// log spectrum, with the field marginalized out.
///
/// Evaluated in data space with `K = R Φ R† + σ_n² 𝟙`:
/// `½(log|Φ|/|D| − j†Dj) = ½(log|K|/|N| + dᵀK⁻¹d − dᵀN⁻¹d)`,
/// reported without the spectrum-independent `−½dᵀN⁻¹d`.
#[derive(Clone, Debug)]
pub struct MarginalLikelihood {
    grid: RegularGrid,
    response: MaskResponseOp,
    noise_sigma: f64,
    data: Vec<f64>,
    obs: Vec<Vec<usize>>,
    dense_cap: usize,
}

/// Data-space quantities at one spectrum.
pub(crate) struct KernelState {
    /// Harmonic eigenvalues of the cell covariance.
    pub lambda: Vec<f64>,
    /// First column of the cell covariance.
    pub c: Vec<f64>,
    /// Factor of `𝟙 + g`.
    pub chol: Cholesky,
}

impl MarginalLikelihood {
    pub fn new(response: MaskResponseOp, noise_sigma: f64, data: Vec<f64>, dense_cap: usize) -> Result<Self> {
        check_len(response.n_observed(), data.len())?;
        if !(noise_sigma.is_finite() && noise_sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("noise sigma must be positive, got {noise_sigma}")));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("data entry {i}")));
        }
        let grid = response.grid().clone();
        let obs = response.observed().iter().map(|&f| grid.unravel(f)).collect();
        Ok(Self {
            grid,
            response,
            noise_sigma,
            data,
            obs,
            dense_cap,
        })
    }

    pub fn response(&self) -> &MaskResponseOp {
        &self.response
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn diff_flat(&self, i: usize, j: usize) -> usize {
        let (a, b) = (&self.obs[i], &self.obs[j]);
        let mut flat = 0;
        for (ax, axis) in self.grid.axes().iter().enumerate() {
            let n = axis.n_points;
            flat = flat * n + (a[ax] + n - b[ax]) % n;
        }
        flat
    }

    pub(crate) fn kernel(&self, log_p: &[f64]) -> Result<KernelState> {
        check_len(self.grid.size(), log_p.len())?;
        let m = self.data.len();
        if m > self.dense_cap {
            return Err(Error::DenseCapExceeded {
                size: m,
                cap: self.dense_cap,
            });
        }
        let dv = self.grid.cell_volume();
        let lambda: Vec<f64> = log_p
            .iter()
            .map(|&s| convention::covariance_eigenvalue(s.exp(), dv))
            .collect();
        if let Some(k) = lambda.iter().position(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::NonFinite(format!("covariance eigenvalue at mode {k}")));
        }
        let c = covariance_column(&self.grid, &lambda);
        let s2 = self.noise_sigma * self.noise_sigma;
        // 𝟙 + RΦR†/σ_n²
        let k = Mat::<f64>::from_fn(m, m, |i, j| c[self.diff_flat(i, j)] / s2 + if i == j { 1.0 } else { 0.0 });
        let chol = Cholesky::new(&k, "data covariance")?;
        Ok(KernelState { lambda, c, chol })
    }

    /// Value without the constant `−½dᵀN⁻¹d`, which would swamp the
    /// spectrum-dependent part for small noise; also returns `σ_n²K⁻¹d`.
    fn value_from(&self, st: &KernelState) -> (f64, Vec<f64>) {
        let alpha = st.chol.solve(&self.data);
        let s2 = self.noise_sigma * self.noise_sigma;
        let fit: f64 = alpha.iter().zip(&self.data).map(|(a, d)| a * d).sum();
        (0.5 * (st.chol.log_det() + fit / s2), alpha)
    }
}

/// First column of the circulant matrix with harmonic eigenvalues `lambda`.
pub(crate) fn covariance_column(grid: &RegularGrid, lambda: &[f64]) -> Vec<f64> {
    let mut buf: Vec<Complex64> = lambda.iter().map(|&l| Complex64::new(l, 0.0)).collect();
    fft_nd(&mut buf, &grid.shape(), FftDirection::Inverse);
    let n = lambda.len() as f64;
    buf.iter().map(|v| v.re / n).collect()
}

fn forward_real(grid: &RegularGrid, x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut buf, &grid.shape(), FftDirection::Forward);
    buf
}

impl Likelihood for MarginalLikelihood {
    fn grid(&self) -> &RegularGrid {
        &self.grid
    }

    fn value(&self, log_p: &[f64]) -> Result<f64> {
        if self.data.is_empty() {
            check_len(self.grid.size(), log_p.len())?;
            return Ok(0.0);
        }
        let st = self.kernel(log_p)?;
        Ok(self.value_from(&st).0)
    }

    fn value_and_gradient(&self, log_p: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.grid.size();
        if self.data.is_empty() {
            check_len(n, log_p.len())?;
            return Ok((0.0, vec![0.0; n]));
        }
        let st = self.kernel(log_p)?;
        let (h, alpha_scaled) = self.value_from(&st);
        let s2 = self.noise_sigma * self.noise_sigma;
        let m = self.data.len();

        // tr(K⁻¹ ∂K/∂λ_k) through the lag sums of K⁻¹
        let kinv = st.chol.inverse();
        let mut lag = vec![0.0; n];
        for j in 0..m {
            for i in 0..m {
                lag[self.diff_flat(i, j)] += kinv[(i, j)];
            }
        }
        let a = forward_real(&self.grid, &lag);

        // αᵀ ∂K/∂λ_k α with α = K⁻¹d
        let alpha: Vec<f64> = alpha_scaled.iter().map(|v| v / s2).collect();
        let b = forward_real(&self.grid, &self.response.adjoint_apply(&alpha));

        let nf = n as f64;
        let grad = (0..n)
            .map(|k| 0.5 * st.lambda[k] * (a[k].re / s2 - b[k].norm_sqr()) / nf)
            .collect();
        Ok((h, grad))
    }

    fn initial_log_spectrum(&self) -> Vec<f64> {
        let n = self.grid.size();
        let filled = self.response.adjoint_apply(&self.data);
        let h = crate::grid::forward_raw(&self.grid, &filled);
        let v = self.grid.total_volume();
        let scale = if self.data.is_empty() {
            1.0
        } else {
            n as f64 / self.data.len() as f64
        };
        let floor = (self.noise_sigma * self.noise_sigma * self.grid.cell_volume()).max(f64::MIN_POSITIVE);
        let logs: Vec<f64> = h
            .iter()
            .map(|hk| (convention::periodogram(hk.norm_sqr(), v) * scale).max(floor).ln())
            .collect();
        smooth_signed(&self.grid, &logs, 5)
    }
}

/// Spectral inference from masked data with white Gaussian noise.
pub struct NoisyDataProblem {
    likelihood_view: MarginalLikelihood,
    noise: ScaledIdentityOp,
    posterior: Posterior,
    params: SpectralParams,
}

impl NoisyDataProblem {
    pub fn new(
        data: Vec<f64>,
        response: MaskResponseOp,
        noise_sigma: f64,
        hyper: &SmoothnessHyper,
        epsilon: f64,
        nu: f64,
    ) -> Result<Self> {
        let priors = PriorTerms::new(response.grid(), hyper)?;
        Self::with_priors(data, response, noise_sigma, priors, epsilon, nu, DEFAULT_DENSE_CAP)
    }

    pub fn with_priors(
        data: Vec<f64>,
        response: MaskResponseOp,
        noise_sigma: f64,
        priors: PriorTerms,
        epsilon: f64,
        nu: f64,
        dense_cap: usize,
    ) -> Result<Self> {
        let lik = MarginalLikelihood::new(response, noise_sigma, data, dense_cap)?;
        let grid = lik.grid.clone();
        let params = SpectralParams::new(&grid, lik.initial_log_spectrum(), vec![0.0; grid.size()], epsilon, nu)?;
        Ok(Self {
            noise: ScaledIdentityOp::new(lik.data.len(), noise_sigma * noise_sigma),
            posterior: Posterior::new(Box::new(lik.clone()), priors),
            likelihood_view: lik,
            params,
        })
    }

    pub fn data(&self) -> &[f64] {
        &self.likelihood_view.data
    }

    pub fn response(&self) -> &MaskResponseOp {
        &self.likelihood_view.response
    }

    /// The noise covariance `N = σ_n² 𝟙`.
    pub fn noise(&self) -> &ScaledIdentityOp {
        &self.noise
    }

    pub fn noise_sigma(&self) -> f64 {
        self.likelihood_view.noise_sigma
    }

    pub fn marginal(&self) -> &MarginalLikelihood {
        &self.likelihood_view
    }
}

impl SpectralProblem for NoisyDataProblem {
    fn posterior(&self) -> &Posterior {
        &self.posterior
    }

    fn params(&self) -> &SpectralParams {
        &self.params
    }

    fn set_params(&mut self, params: SpectralParams) -> Result<()> {
        if params.grid() != &self.likelihood_view.grid {
            return Err(Error::GridMismatch);
        }
        self.params = params;
        Ok(())
    }
}

/// Marginal Hamiltonian at the problem's current parameters.
pub fn marginal_hamiltonian(prob: &NoisyDataProblem) -> Result<f64> {
    prob.hamiltonian()
}

/// Gradients of [`marginal_hamiltonian`] with respect to `τ` and `δ`.
pub fn marginal_gradient(prob: &NoisyDataProblem) -> Result<(Vec<f64>, Vec<f64>)> {
    prob.gradient()
}
