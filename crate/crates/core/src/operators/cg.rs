use std::sync::Arc;

use super::{check_len, dot, norm, LinOp};
use crate::error::{Error, Result};

/// Conjugate-gradient settings.
#[derive(Clone)]
pub struct CgConfig {
    pub rel_tolerance: f64,
    pub abs_tolerance: f64,
    /// `None` means ten times the problem size.
    pub max_iters: Option<usize>,
    /// Approximate inverse of the operator.
    pub preconditioner: Option<Arc<dyn LinOp>>,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            rel_tolerance: 1e-8,
            abs_tolerance: 1e-12,
            max_iters: None,
            preconditioner: None,
        }
    }
}

impl CgConfig {
    pub fn with_preconditioner(mut self, p: Arc<dyn LinOp>) -> Self {
        self.preconditioner = Some(p);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.rel_tolerance > 0.0 && self.abs_tolerance > 0.0) {
            return Err(Error::InvalidArgument("CG tolerances must be positive".into()));
        }
        if self.max_iters == Some(0) {
            return Err(Error::InvalidArgument("CG max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final `‖op·x − b‖ / ‖b‖`, recomputed from the solution.
    pub residual: f64,
}

/// Solves `op·x = b` for a self-adjoint positive-definite `op`.
pub fn cg_solve(op: &dyn LinOp, b: &[f64], cfg: &CgConfig) -> Result<CgSolution> {
    cfg.validate()?;
    let n = op.domain_len();
    check_len(n, b.len())?;
    check_len(n, op.codomain_len())?;
    if let Some(p) = &cfg.preconditioner {
        check_len(n, p.domain_len())?;
    }
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let max_iters = cfg.max_iters.unwrap_or(10 * n.max(1));
    let target = (cfg.rel_tolerance * b_norm).max(cfg.abs_tolerance);
    let precondition = |r: &[f64]| match &cfg.preconditioner {
        Some(p) => p.apply(r),
        None => r.to_vec(),
    };

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut iterations = 0;
    // The recursive residual drifts from the true one, so on apparent
    // convergence the true residual is checked and CG restarted from it.
    loop {
        let mut z = precondition(&r);
        let mut rz = dot(&r, &z);
        if !(rz > 0.0) && norm(&r) > target {
            return Err(Error::NotPositive("preconditioner is not positive definite".into()));
        }
        let mut p = z.clone();
        while norm(&r) > target {
            if iterations >= max_iters {
                let true_res = norm(&residual(op, &x, b)) / b_norm;
                return Err(Error::NotConverged {
                    iterations,
                    residual: true_res,
                });
            }
            let ap = op.apply(&p);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::NotPositive(format!(
                    "CG breakdown: non-positive curvature {pap:e} at iteration {iterations}"
                )));
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            z = precondition(&r);
            let rz_new = dot(&r, &z);
            if !rz_new.is_finite() {
                return Err(Error::NonFinite("CG residual".into()));
            }
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        r = residual(op, &x, b);
        let true_norm = norm(&r);
        if true_norm <= target {
            return Ok(CgSolution {
                x,
                iterations,
                residual: true_norm / b_norm,
            });
        }
        if iterations >= max_iters {
            return Err(Error::NotConverged {
                iterations,
                residual: true_norm / b_norm,
            });
        }
    }
}

fn residual(op: &dyn LinOp, x: &[f64], b: &[f64]) -> Vec<f64> {
    b.iter().zip(op.apply(x)).map(|(bi, ai)| bi - ai).collect()
}
