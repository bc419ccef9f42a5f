use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::{NoisyDataProblem, UNDERESTIMATION_NOTE};
use crate::convention::DEFAULT_DENSE_CAP;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::model::{cell_covariance, SpectralParams};
use crate::operators::{cg_solve, diag_estimate, posterior_precision, CgConfig, LinOp, SumOp};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WienerConfig {
    pub rel_tolerance: f64,
    pub abs_tolerance: f64,
    pub probes: usize,
    pub seed: u64,
    pub dense_cap: usize,
}

impl Default for WienerConfig {
    fn default() -> Self {
        Self {
            rel_tolerance: 1e-10,
            abs_tolerance: 1e-14,
            probes: 64,
            seed: 0,
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }
}

/// Posterior mean and one-sigma map of the field at a fixed spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub mean: Field,
    pub uncertainty: Field,
    /// Prior standard deviation of every cell.
    pub prior_std: f64,
    pub cg_iterations: usize,
    pub cg_residual: f64,
    /// Whether the variance was estimated by probing.
    pub probed: bool,
    pub note: String,
}

/// The posterior covariance `D = (Φ⁻¹ + R†N⁻¹R)⁻¹`, applied by CG.
pub struct WienerCovariance {
    precision: SumOp,
    cg: CgConfig,
    diagonal: Option<Vec<f64>>,
}

impl WienerCovariance {
    pub fn precision(&self) -> &SumOp {
        &self.precision
    }
}

impl LinOp for WienerCovariance {
    fn domain_len(&self) -> usize {
        self.precision.domain_len()
    }

    fn codomain_len(&self) -> usize {
        self.precision.domain_len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match cg_solve(&self.precision, x, &self.cg) {
            Ok(s) => s.x,
            Err(e) => {
                log::error!("posterior covariance solve failed: {e}");
                vec![f64::NAN; x.len()]
            }
        }
    }

    fn adjoint_apply(&self, y: &[f64]) -> Vec<f64> {
        self.apply(y)
    }

    fn is_self_adjoint(&self) -> bool {
        true
    }

    fn exact_diagonal(&self) -> Option<Vec<f64>> {
        self.diagonal.clone()
    }
}

/// Empirical-Bayes reconstruction `m = D̄j` with `√diag(D̄)`.
pub fn wiener_reconstruct(prob: &NoisyDataProblem, params: &SpectralParams, cfg: &WienerConfig) -> Result<Reconstruction> {
    let response = prob.response();
    let grid = response.grid();
    if params.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let sigma = prob.noise_sigma();
    let s2 = sigma * sigma;
    let cov = cell_covariance(grid, &params.spectrum())?;
    let precision = posterior_precision(&cov, response, s2)?;
    let j: Vec<f64> = response.adjoint_apply(prob.data()).iter().map(|v| v / s2).collect();
    let cg = CgConfig {
        rel_tolerance: cfg.rel_tolerance,
        abs_tolerance: cfg.abs_tolerance,
        max_iters: None,
        preconditioner: Some(Arc::new(cov.clone())),
    };
    let sol = cg_solve(&precision, &j, &cg)?;

    let m = response.n_observed();
    let diagonal = if m <= cfg.dense_cap {
        Some(woodbury_diagonal(prob, params)?)
    } else {
        None
    };
    let probed = diagonal.is_none() && grid.size() > cfg.dense_cap;
    let covariance = WienerCovariance {
        precision,
        cg,
        diagonal,
    };
    let var = diag_estimate(&covariance, cfg.probes, cfg.seed, cfg.dense_cap)?;
    if var.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("posterior variance".into()));
    }
    let prior_var = cov.diag().iter().sum::<f64>() / grid.size() as f64;
    let std: Vec<f64> = var.iter().map(|v| v.clamp(0.0, prior_var).sqrt()).collect();
    Ok(Reconstruction {
        mean: Field::new(grid.clone(), sol.x)?,
        uncertainty: Field::new(grid.clone(), std)?,
        prior_std: prior_var.sqrt(),
        cg_iterations: sol.iterations,
        cg_residual: sol.residual,
        probed,
        note: UNDERESTIMATION_NOTE.into(),
    })
}

/// `diag(Φ) − diag(Φ R† K⁻¹ R Φ)` with `K = RΦR† + σ_n²𝟙`.
fn woodbury_diagonal(prob: &NoisyDataProblem, params: &SpectralParams) -> Result<Vec<f64>> {
    let grid = params.grid();
    let n = grid.size();
    let lik = prob.marginal();
    if prob.data().is_empty() {
        let lambda = cell_covariance(grid, &params.spectrum())?;
        let c0 = lambda.diag().iter().sum::<f64>() / n as f64;
        return Ok(vec![c0; n]);
    }
    let st = lik.kernel(&params.log_spectrum())?;
    let obs: Vec<Vec<usize>> = prob.response().observed().iter().map(|&f| grid.unravel(f)).collect();
    let cells: Vec<Vec<usize>> = (0..n).map(|f| grid.unravel(f)).collect();
    let lag = |a: &[usize], b: &[usize]| -> usize {
        let mut flat = 0;
        for (ax, axis) in grid.axes().iter().enumerate() {
            let np = axis.n_points;
            flat = flat * np + (a[ax] + np - b[ax]) % np;
        }
        flat
    };
    let b = Mat::<f64>::from_fn(obs.len(), n, |i, x| st.c[lag(&obs[i], &cells[x])]);
    let z = st.chol.solve_mat(&b);
    let s2 = prob.noise_sigma().powi(2);
    let c0 = st.c[0];
    Ok((0..n)
        .map(|x| {
            let reduction: f64 = (0..obs.len()).map(|i| b[(i, x)] * z[(i, x)]).sum();
            c0 - reduction / s2
        })
        .collect())
}
