use serde::{Deserialize, Serialize};

use super::{MapResult, SpectralProblem, UNDERESTIMATION_NOTE};
use crate::convention::DEFAULT_DENSE_CAP;
use crate::error::{Error, Result};
use crate::linalg::inverse_diagonal;
use crate::operators::{dense_materialize, inverse_diagonal_estimate, CgConfig, LinOp};
use crate::priors::PriorPrecision;

/// Laplace uncertainty of the log spectrum `τ + tan δ` at the MAP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureUncertainty {
    /// `√(Ô_ττ + Ô_tt)` per mode.
    pub sigma_log_spectrum: Vec<f64>,
    pub sigma_tau: Vec<f64>,
    /// Uncertainty of `t = tan δ`.
    pub sigma_tan_delta: Vec<f64>,
    /// Whether a block was not positive definite and a pseudo-inverse was used.
    pub fallback_used: bool,
    /// Whether the diagonals were estimated by probing.
    pub probed: bool,
    pub note: String,
}

/// One curvature block: `diag(d) + J (A + r𝟙) J` with `J = diag(j)`.
struct CurvatureBlock<'a> {
    diag: Vec<f64>,
    jac: Option<Vec<f64>>,
    prior: Option<&'a PriorPrecision>,
    ridge: f64,
}

impl LinOp for CurvatureBlock<'_> {
    fn domain_len(&self) -> usize {
        self.diag.len()
    }

    fn codomain_len(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let jx: Vec<f64> = match &self.jac {
            Some(j) => x.iter().zip(j).map(|(a, b)| a * b).collect(),
            None => x.to_vec(),
        };
        let mut inner: Vec<f64> = match self.prior {
            Some(p) => p.apply(&jx),
            None => vec![0.0; x.len()],
        };
        for (v, a) in inner.iter_mut().zip(&jx) {
            *v += self.ridge * a;
        }
        if let Some(j) = &self.jac {
            inner.iter_mut().zip(j).for_each(|(v, b)| *v *= b);
        }
        inner.iter_mut().zip(&self.diag).zip(x).for_each(|((v, d), a)| *v += d * a);
        inner
    }

    fn adjoint_apply(&self, y: &[f64]) -> Vec<f64> {
        self.apply(y)
    }

    fn is_self_adjoint(&self) -> bool {
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurvatureConfig {
    pub dense_cap: usize,
    pub probes: usize,
    pub seed: u64,
}

impl Default for CurvatureConfig {
    fn default() -> Self {
        Self {
            dense_cap: DEFAULT_DENSE_CAP,
            probes: 64,
            seed: 0,
        }
    }
}

/// `√Ô` from the curvature of the Hamiltonian in `(τ, t = tan δ)`.
///
/// The `t`-block is the exact second derivative of the Hamiltonian with
/// the Jacobian term `Σ log(1 + t²)` of the change of variables, so that
/// the prior on `δ` enters conjugated by `J = cos²δ` together with the
/// first-order correction `∇_δH_prior · d²δ/dt²`.
pub fn curvature_uncertainty(
    result: &MapResult,
    problem: &dyn SpectralProblem,
    cfg: &CurvatureConfig,
) -> Result<CurvatureUncertainty> {
    let posterior = problem.posterior();
    let params = result.params(problem.params())?;
    let n = params.tau().len();
    let lik = posterior.likelihood().curvature(&params.log_spectrum())?;
    let smooth = posterior.priors().smoothness();
    let (_, prior_grad_delta) = posterior.priors().gradient(&params);

    let tau_block = CurvatureBlock {
        diag: lik.clone(),
        jac: None,
        prior: smooth.map(|(t, _)| t),
        ridge: 0.0,
    };
    let mut t_diag = lik;
    let jac: Vec<f64> = params.delta().iter().map(|d| d.cos().powi(2)).collect();
    for (k, d) in params.delta().iter().enumerate() {
        let t = d.tan();
        let second = -2.0 * d.sin() * d.cos().powi(3);
        t_diag[k] += prior_grad_delta[k] * second + 2.0 * (1.0 - t * t) / (1.0 + t * t).powi(2);
    }
    let t_block = CurvatureBlock {
        diag: t_diag,
        jac: Some(jac),
        prior: smooth.map(|(_, m)| m),
        ridge: 1.0 / (params.nu() * params.nu()),
    };

    let probed = n > cfg.dense_cap;
    let mut fallback_used = false;
    let mut invert = |block: &CurvatureBlock<'_>, seed: u64| -> Result<Vec<f64>> {
        if !probed {
            let m = dense_materialize(block, cfg.dense_cap)?;
            let (d, fb) = inverse_diagonal(&m)?;
            fallback_used |= fb;
            return Ok(d);
        }
        match inverse_diagonal_estimate(block, cfg.probes, seed, &CgConfig::default()) {
            Ok(d) => Ok(d),
            Err(Error::NotPositive(msg)) => {
                log::warn!("curvature not positive ({msg}); using the inverse diagonal");
                fallback_used = true;
                let mut e = vec![0.0; n];
                Ok((0..n)
                    .map(|i| {
                        e[i] = 1.0;
                        let v = block.apply(&e)[i];
                        e[i] = 0.0;
                        if v > 0.0 {
                            1.0 / v
                        } else {
                            0.0
                        }
                    })
                    .collect())
            }
            Err(e) => Err(e),
        }
    };
    let var_tau = invert(&tau_block, cfg.seed)?;
    let var_t = invert(&t_block, cfg.seed.wrapping_add(1))?;
    if fallback_used {
        log::warn!("curvature at the MAP is not positive definite; used a pseudo-inverse");
    }
    let clip = |v: &f64| v.max(0.0).sqrt();
    Ok(CurvatureUncertainty {
        sigma_log_spectrum: var_tau.iter().zip(&var_t).map(|(a, b)| clip(&(a + b))).collect(),
        sigma_tau: var_tau.iter().map(clip).collect(),
        sigma_tan_delta: var_t.iter().map(clip).collect(),
        fallback_used,
        probed,
        note: UNDERESTIMATION_NOTE.into(),
    })
}
