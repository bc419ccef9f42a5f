//! Dense helpers over faer.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};

use crate::error::{Error, Result};

pub(crate) struct Cholesky {
    llt: faer::linalg::solvers::Llt<f64>,
    n: usize,
}

impl Cholesky {
    pub(crate) fn new(m: &Mat<f64>, what: &str) -> Result<Self> {
        let llt = m
            .llt(Side::Lower)
            .map_err(|_| Error::NotPositive(format!("{what} is not positive definite")))?;
        Ok(Self { llt, n: m.nrows() })
    }

    pub(crate) fn log_det(&self) -> f64 {
        let l = self.llt.L();
        (0..self.n).map(|i| 2.0 * l[(i, i)].ln()).sum()
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.llt.solve_in_place(rhs.as_mut());
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }

    pub(crate) fn solve_mat(&self, b: &Mat<f64>) -> Mat<f64> {
        self.llt.solve(b)
    }

    pub(crate) fn inverse(&self) -> Mat<f64> {
        self.llt.inverse()
    }
}

/// Diagonal of the inverse of a symmetric matrix.
///
/// Falls back to an eigenvalue-clipped pseudo-inverse when the matrix is not
/// positive definite; the second value reports whether that happened.
pub(crate) fn inverse_diagonal(m: &Mat<f64>) -> Result<(Vec<f64>, bool)> {
    let n = m.nrows();
    if let Ok(ch) = Cholesky::new(m, "matrix") {
        let inv = ch.inverse();
        return Ok(((0..n).map(|i| inv[(i, i)]).collect(), false));
    }
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::NotPositive("eigendecomposition failed".into()))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let top = (0..n).map(|i| s[i].abs()).fold(0.0, f64::max);
    let floor = top * 1e-12;
    let mut diag = vec![0.0; n];
    for j in 0..n {
        if s[j] <= floor {
            continue;
        }
        let inv = 1.0 / s[j];
        for (i, d) in diag.iter_mut().enumerate() {
            *d += u[(i, j)] * u[(i, j)] * inv;
        }
    }
    Ok((diag, true))
}
