use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cg_solve, CgConfig, LinOp};
use crate::error::{Error, Result};

/// Dense matrix with columns `op(e_j)`.
pub fn dense_materialize(op: &dyn LinOp, cap: usize) -> Result<Mat<f64>> {
    let (rows, cols) = (op.codomain_len(), op.domain_len());
    let size = rows.max(cols);
    if size > cap {
        return Err(Error::DenseCapExceeded { size, cap });
    }
    if let Some(m) = op.dense_override() {
        return Ok(m);
    }
    let mut m = Mat::<f64>::zeros(rows, cols);
    let mut e = vec![0.0; cols];
    for j in 0..cols {
        e[j] = 1.0;
        let col = op.apply(&e);
        e[j] = 0.0;
        for (i, v) in col.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogDetMethod {
    /// Cholesky factorization of the dense form.
    Exact,
    /// Sum of log harmonic eigenvalues; only for operators diagonal in harmonic space.
    Diagonal,
}

/// Log-determinant of a self-adjoint positive operator.
pub fn log_det(op: &dyn LinOp, method: LogDetMethod, cap: usize) -> Result<f64> {
    match method {
        LogDetMethod::Diagonal => {
            let d = op.harmonic_diagonal().ok_or_else(|| {
                Error::InvalidArgument("diagonal log-det requires a harmonic-diagonal operator".into())
            })?;
            let mut acc = 0.0;
            for (i, v) in d.iter().enumerate() {
                if !(*v > 0.0) {
                    return Err(Error::NotPositive(format!("harmonic eigenvalue {i} = {v}")));
                }
                acc += v.ln();
            }
            Ok(acc)
        }
        LogDetMethod::Exact => {
            let m = dense_materialize(op, cap)?;
            if m.nrows() != m.ncols() {
                return Err(Error::InvalidArgument("log-det of a non-square operator".into()));
            }
            log_det_dense(&m)
        }
    }
}

pub(crate) fn log_det_dense(m: &Mat<f64>) -> Result<f64> {
    let n = m.nrows();
    let sym = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let llt = sym
        .llt(Side::Lower)
        .map_err(|_| Error::NotPositive("non-positive pivot in Cholesky factorization".into()))?;
    let l = llt.L();
    Ok((0..n).map(|i| 2.0 * l[(i, i)].ln()).sum())
}

/// Diagonal of a self-adjoint operator in the cell basis.
///
/// Uses the operator's own diagonal when known, the dense form when under
/// `cap`, and Rademacher probing otherwise.
pub fn diag_estimate(op: &dyn LinOp, n_probes: usize, seed: u64, cap: usize) -> Result<Vec<f64>> {
    if n_probes < 1 {
        return Err(Error::InvalidArgument("diag_estimate needs at least one probe".into()));
    }
    if let Some(d) = op.exact_diagonal() {
        return Ok(d);
    }
    if op.domain_len() <= cap {
        let m = dense_materialize(op, cap)?;
        return Ok((0..m.nrows()).map(|i| m[(i, i)]).collect());
    }
    hutchinson_diagonal(op, n_probes, seed)
}

/// Probe estimate `mean(z ⊙ op z)` over Rademacher vectors `z`.
pub fn hutchinson_diagonal(op: &dyn LinOp, n_probes: usize, seed: u64) -> Result<Vec<f64>> {
    if n_probes < 1 {
        return Err(Error::InvalidArgument("diag_estimate needs at least one probe".into()));
    }
    let n = op.domain_len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0; n];
    let mut z = vec![0.0; n];
    for _ in 0..n_probes {
        for v in z.iter_mut() {
            *v = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        for (a, (zi, yi)) in acc.iter_mut().zip(z.iter().zip(op.apply(&z))) {
            *a += zi * yi;
        }
    }
    let scale = 1.0 / n_probes as f64;
    Ok(acc.into_iter().map(|a| a * scale).collect())
}

/// Probe estimate of the diagonal of `op⁻¹`, with one CG solve per probe.
pub fn inverse_diagonal_estimate(op: &dyn LinOp, n_probes: usize, seed: u64, cfg: &CgConfig) -> Result<Vec<f64>> {
    if n_probes < 1 {
        return Err(Error::InvalidArgument("diag_estimate needs at least one probe".into()));
    }
    let n = op.domain_len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0; n];
    let mut z = vec![0.0; n];
    for _ in 0..n_probes {
        for v in z.iter_mut() {
            *v = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        let x = cg_solve(op, &z, cfg)?.x;
        for (a, (zi, xi)) in acc.iter_mut().zip(z.iter().zip(x)) {
            *a += zi * xi;
        }
    }
    let scale = 1.0 / n_probes as f64;
    Ok(acc.into_iter().map(|a| a * scale).collect())
}
