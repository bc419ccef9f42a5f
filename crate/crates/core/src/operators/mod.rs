//! Linear operators on flat real vectors, their composition, and solvers.
//!
//! Operators act on cell values (or on real fields over the harmonic
//! lattice) as plain matrices under the Euclidean inner product; the uniform
//! cell volume weight of [`crate::grid::inner_product`] does not change adjoints.

mod cg;
mod dense;

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::FftDirection;

use crate::error::{Error, Result};
use crate::grid::{fft_nd, HarmonicField, RegularGrid};

pub use cg::{cg_solve, CgConfig, CgSolution};
pub use dense::{
    dense_materialize, diag_estimate, hutchinson_diagonal, inverse_diagonal_estimate, log_det, LogDetMethod,
};

/// A linear map between real vector spaces with a known adjoint.
pub trait LinOp: Send + Sync {
    fn domain_len(&self) -> usize;

    fn codomain_len(&self) -> usize;

    /// Panics if `x.len() != self.domain_len()`; see [`LinOp::try_apply`].
    fn apply(&self, x: &[f64]) -> Vec<f64>;

    fn adjoint_apply(&self, y: &[f64]) -> Vec<f64>;

    fn is_self_adjoint(&self) -> bool {
        false
    }

    /// Eigenvalues in the harmonic basis, for operators diagonal there.
    fn harmonic_diagonal(&self) -> Option<Vec<f64>> {
        None
    }

    /// Diagonal in the cell basis, when it is known without probing.
    fn exact_diagonal(&self) -> Option<Vec<f64>> {
        None
    }

    /// Dense form, for operators that can build it faster than column probing.
    fn dense_override(&self) -> Option<faer::Mat<f64>> {
        None
    }

    fn try_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.domain_len(), x.len())?;
        Ok(self.apply(x))
    }

    fn try_adjoint_apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.codomain_len(), y.len())?;
        Ok(self.adjoint_apply(y))
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::DomainMismatch { expected, got })
    } else {
        Ok(())
    }
}

fn assert_len(expected: usize, got: usize) {
    assert_eq!(expected, got, "operator domain mismatch");
}

/// Multiplication by a real positive function of `k` in harmonic space.
///
/// Acting on cell values this is the circulant matrix `F⁻¹ diag(d) F`. When
/// `d(k) != d(-k)` the real part of the result is returned, which equals
/// the action of the symmetrized multiplier.
#[derive(Clone, Debug)]
pub struct DiagonalHarmonicOp {
    grid: RegularGrid,
    diag: Vec<f64>,
}

impl DiagonalHarmonicOp {
    pub fn new(grid: &RegularGrid, diag: Vec<f64>) -> Result<Self> {
        check_len(grid.size(), diag.len())?;
        if let Some(i) = diag.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::NotPositive(format!(
                "diagonal entry {i} = {} is not strictly positive and finite",
                diag[i]
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            diag,
        })
    }

    pub fn identity(grid: &RegularGrid) -> Self {
        Self {
            grid: grid.clone(),
            diag: vec![1.0; grid.size()],
        }
    }

    pub fn grid(&self) -> &RegularGrid {
        &self.grid
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn inverse(&self) -> InverseDiagonalOp {
        InverseDiagonalOp {
            inner: self.clone(),
        }
    }

    /// Pointwise product with a harmonic field.
    pub fn apply_harmonic(&self, h: &HarmonicField) -> Result<HarmonicField> {
        if h.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let values = h
            .values()
            .iter()
            .zip(&self.diag)
            .map(|(v, d)| v * d)
            .collect();
        HarmonicField::new(self.grid.clone(), values, h.is_hermitian())
    }
}

pub(crate) fn circulant_apply(grid: &RegularGrid, multiplier: impl Fn(usize) -> f64, x: &[f64]) -> Vec<f64> {
    let shape = grid.shape();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut buf, &shape, FftDirection::Forward);
    for (i, v) in buf.iter_mut().enumerate() {
        *v *= multiplier(i);
    }
    fft_nd(&mut buf, &shape, FftDirection::Inverse);
    let n = x.len() as f64;
    buf.iter().map(|v| v.re / n).collect()
}

impl LinOp for DiagonalHarmonicOp {
    fn domain_len(&self) -> usize {
        self.grid.size()
    }

    fn codomain_len(&self) -> usize {
        self.grid.size()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_len(self.grid.size(), x.len());
        circulant_apply(&self.grid, |i| self.diag[i], x)
    }

    fn adjoint_apply(&self, y: &[f64]) -> Vec<f64> {
        self.apply(y)
    }

    fn is_self_adjoint(&self) -> bool {
        true
    }

    fn harmonic_diagonal(&self) -> Option<Vec<f64>> {
        Some(self.diag.clone())
    }

    fn exact_diagonal(&self) -> Option<Vec<f64>> {
        let mean = self.diag.iter().sum::<f64>() / self.diag.len() as f64;
        Some(vec![mean; self.diag.len()])
    }
}

/// Inverse of a [`DiagonalHarmonicOp`].
#[derive(Clone, Debug)]
pub struct InverseDiagonalOp {
    inner: DiagonalHarmonicOp,
}

impl LinOp for InverseDiagonalOp {
    fn domain_len(&self) -> usize {
        self.inner.grid.size()
    }

    fn codomain_len(&self) -> usize {
        self.inner.grid.size()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_len(self.domain_len(), x.len());
        circulant_apply(&self.inner.grid, |i| 1.0 / self.inner.diag[i], x)
    }

    fn adjoint_apply(&self, y: &[f64]) -> Vec<f64> {
        self.apply(y)
    }

    fn is_self_adjoint(&self) -> bool {
        true
    }

    fn harmonic_diagonal(&self) -> Option<Vec<f64>> {
        Some(self.inner.diag.iter().map(|d| 1.0 / d).collect())
    }

    fn exact_diagonal(&self) -> Option<Vec<f64>> {
        let d = self.harmonic_diagonal().unwrap();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        Some(vec![mean; d.len()])
    }
}

/// Selects the observed cells of a field; the adjoint scatters data back
/// with zeros in masked cells, so `R†R` is the 0/1 cell selector.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskResponseOp {
    grid: RegularGrid,
    observed: Vec<usize>,
}

impl MaskResponseOp {
    /// `mask[i] == true` marks cell `i` as observed.
    pub fn from_mask(grid: &RegularGrid, mask: &[bool]) -> Result<Self> {
        check_len(grid.size(), mask.len())?;
        Ok(Self {
            grid: grid.clone(),
            observed: (0..mask.len()).filter(|&i| mask[i]).collect(),
        })
    }

    pub fn identity(grid: &RegularGrid) -> Self {
        Self {
            grid: grid.clone(),
            observed: (0..grid.size()).collect(),
        }
    }

    /// A response that observes nothing.
    pub fn empty(grid: &RegularGrid) -> Self {
        Self {
            grid: grid.clone(),
            observed: Vec::new(),
        }
    }

    pub fn grid(&self) -> &RegularGrid {
        &self.grid
    }

    /// Sorted indices of observed cells.
    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn n_observed(&self) -> usize {
        self.observed.len()
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.grid.size()];
        for &i in &self.observed {
            m[i] = true;
        }
        m
    }
}

impl LinOp for MaskResponseOp {
    fn domain_len(&self) -> usize {
        self.grid.size()
    }

    fn codomain_len(&self) -> usize {
        self.observed.len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_len(self.domain_len(), x.len());
        self.observed.iter().map(|&i| x[i]).collect()
    }

    fn adjoint_apply(&self, y: &[f64]) -> Vec<f64> {
        assert_len(self.codomain_len(), y.len());
        let mut out = vec![0.0; self.grid.size()];
        for (&i, &v) in self.observed.iter().zip(y) {
            out[i] = v;
        }
        out
    }

    fn is_self_adjoint(&self) -> bool {
        self.observed.len() == self.grid.size()
    }

    fn exact_diagonal(&self) -> Option<Vec<f64>> {
        (self.observed.len() == self.grid.size()).then(|| vec![1.0; self.grid.size()])
    }
}

/// `scale · 𝟙` on vectors of length `n`.
#[derive(Clone, Copy, Debug)]
pub struct ScaledIdentityOp {
    n: usize,
    scale: f64,
}

impl ScaledIdentityOp {
    pub fn new(n: usize, scale: f64) -> Self {
        Self { n, scale }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

impl LinOp for ScaledIdentityOp {
    fn domain_len(&self) -> usize {
        self.n
    }

    fn codomain_len(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_len(self.n, x.len());
        x.iter().map(|v| v * self.scale).collect()
    }

    fn adjoint_apply(&self, y: &[f64]) -> Vec<f64> {
        self.apply(y)
    }

    fn is_self_adjoint(&self) -> bool {
        true
    }

    fn harmonic_diagonal(&self) -> Option<Vec<f64>> {
        Some(vec![self.scale; self.n])
    }

    fn exact_diagonal(&self) -> Option<Vec<f64>> {
        Some(vec![self.scale; self.n])
    }
}

/// Sum of operators with a common domain and codomain.
#[derive(Clone)]
pub struct SumOp {
    terms: Vec<Arc<dyn LinOp>>,
}

impl SumOp {
    pub fn new(terms: Vec<Arc<dyn LinOp>>) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidArgument("SumOp needs at least one term".into()))?;
        let (d, c) = (first.domain_len(), first.codomain_len());
        for t in &terms[1..] {
            check_len(d, t.domain_len())?;
            check_len(c, t.codomain_len())?;
        }
        Ok(Self { terms })
    }
}

impl LinOp for SumOp {
    fn domain_len(&self) -> usize {
        self.terms[0].domain_len()
    }

    fn codomain_len(&self) -> usize {
        self.terms[0].codomain_len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.terms[0].apply(x);
        for t in &self.terms[1..] {
            for (o, v) in out.iter_mut().zip(t.apply(x)) {
                *o += v;
            }
        }
        out
    }

    fn adjoint_apply(&self, y: &[f64]) -> Vec<f64> {
        let mut out = self.terms[0].adjoint_apply(y);
        for t in &self.terms[1..] {
            for (o, v) in out.iter_mut().zip(t.adjoint_apply(y)) {
                *o += v;
            }
        }
        out
    }

    fn is_self_adjoint(&self) -> bool {
        self.terms.iter().all(|t| t.is_self_adjoint())
    }

    fn harmonic_diagonal(&self) -> Option<Vec<f64>> {
        let mut acc = self.terms[0].harmonic_diagonal()?;
        for t in &self.terms[1..] {
            for (a, v) in acc.iter_mut().zip(t.harmonic_diagonal()?) {
                *a += v;
            }
        }
        Some(acc)
    }

    fn exact_diagonal(&self) -> Option<Vec<f64>> {
        let mut acc = self.terms[0].exact_diagonal()?;
        for t in &self.terms[1..] {
            for (a, v) in acc.iter_mut().zip(t.exact_diagonal()?) {
                *a += v;
            }
        }
        Some(acc)
    }
}

/// Composition `outer ∘ inner`.
#[derive(Clone)]
pub struct ChainOp {
    outer: Arc<dyn LinOp>,
    inner: Arc<dyn LinOp>,
}

impl ChainOp {
    pub fn new(outer: Arc<dyn LinOp>, inner: Arc<dyn LinOp>) -> Result<Self> {
        check_len(outer.domain_len(), inner.codomain_len())?;
        Ok(Self { outer, inner })
    }
}

impl LinOp for ChainOp {
    fn domain_len(&self) -> usize {
        self.inner.domain_len()
    }

    fn codomain_len(&self) -> usize {
        self.outer.codomain_len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.outer.apply(&self.inner.apply(x))
    }

    fn adjoint_apply(&self, y: &[f64]) -> Vec<f64> {
        self.inner.adjoint_apply(&self.outer.adjoint_apply(y))
    }
}

/// The adjoint of another operator.
#[derive(Clone)]
pub struct AdjointOp {
    inner: Arc<dyn LinOp>,
}

impl AdjointOp {
    pub fn new(inner: Arc<dyn LinOp>) -> Self {
        Self { inner }
    }
}

impl LinOp for AdjointOp {
    fn domain_len(&self) -> usize {
        self.inner.codomain_len()
    }

    fn codomain_len(&self) -> usize {
        self.inner.domain_len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.inner.adjoint_apply(x)
    }

    fn adjoint_apply(&self, y: &[f64]) -> Vec<f64> {
        self.inner.apply(y)
    }

    fn is_self_adjoint(&self) -> bool {
        self.inner.is_self_adjoint()
    }
}

/// Builds `R†N⁻¹R + Φ⁻¹` for a mask response and white noise of variance `noise_var`.
pub fn posterior_precision(
    prior: &DiagonalHarmonicOp,
    response: &MaskResponseOp,
    noise_var: f64,
) -> Result<SumOp> {
    let r: Arc<dyn LinOp> = Arc::new(response.clone());
    let n_inv: Arc<dyn LinOp> = Arc::new(ScaledIdentityOp::new(response.n_observed(), 1.0 / noise_var));
    let data_term = ChainOp::new(
        Arc::new(AdjointOp::new(r.clone())),
        Arc::new(ChainOp::new(n_inv, r)?),
    )?;
    SumOp::new(vec![Arc::new(prior.inverse()), Arc::new(data_term)])
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
