//! Smoothness priors on log-spectra.
//!
//! `T⁻¹` penalizes the squared Hessian of a mode function `ψ(k)` with respect
//! to `log|k_i|`, integrated over each orthant of the harmonic lattice; its
//! null space contains power laws. Modes with a zero coordinate have no log
//! coordinate and are constrained only by the zero-mode prior `D_η⁻¹`, which
//! penalizes plain second `k`-derivatives.

mod fourier;
mod sparse;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RegularGrid;
use crate::operators::{check_len, LinOp};

pub use fourier::FourierSmoothness;
pub use sparse::{CsrMatrix, QuadraticForm};
use sparse::{fornberg, stencil_nodes, trapezoid_weights, QuadraticFormBuilder};

pub const DEFAULT_ETA: f64 = 0.1;

/// A symmetric positive semi-definite precision that evaluates its own energy.
pub trait QuadraticPrecision: LinOp {
    /// `½ ψᵀAψ`.
    fn energy(&self, psi: &[f64]) -> f64;
}

impl QuadraticPrecision for QuadraticForm {
    fn energy(&self, psi: &[f64]) -> f64 {
        QuadraticForm::energy(self, psi)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffBackend {
    #[default]
    FiniteDifference,
    Fourier,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessHyper {
    pub sigma: f64,
    pub mu: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub backend: DiffBackend,
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

impl SmoothnessHyper {
    pub fn new(sigma: f64, mu: f64) -> Self {
        Self {
            sigma,
            mu,
            eta: DEFAULT_ETA,
            backend: DiffBackend::FiniteDifference,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma", self.sigma), ("mu", self.mu), ("eta", self.eta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// `log|k|` of every harmonic position per axis; undefined at `k = 0`.
#[derive(Clone, Debug)]
pub struct LogCoordMap {
    axes: Vec<Vec<Option<f64>>>,
}

impl LogCoordMap {
    pub fn new(grid: &RegularGrid) -> Self {
        let axes = (0..grid.ndim())
            .map(|a| {
                let dk = grid.mode_spacing(a);
                (0..grid.axes()[a].n_points)
                    .map(|i| {
                        let m = grid.signed_index(a, i);
                        (m != 0).then(|| (m.unsigned_abs() as f64 * dk).ln())
                    })
                    .collect()
            })
            .collect();
        Self { axes }
    }

    pub fn log_abs(&self, axis: usize, position: usize) -> Option<f64> {
        self.axes[axis][position]
    }

    pub fn is_zero_row(&self, axis: usize, position: usize) -> bool {
        self.axes[axis][position].is_none()
    }
}

/// One axis of a tensor lattice of evaluation points.
#[derive(Clone, Debug)]
pub(crate) struct AxisLadder {
    /// Abscissae along which derivatives are taken.
    pub x: Vec<f64>,
    /// Integration weights in `x`.
    pub w: Vec<f64>,
    /// FFT-order position of each point.
    pub pos: Vec<usize>,
    /// Signed harmonic coordinate of each point.
    pub coord: Vec<f64>,
    pub sign: i64,
}

pub(crate) type Lattice = Vec<AxisLadder>;

/// Log ladders of every orthant. The Nyquist position closes both the
/// positive and the negative half ladder, so the construction is symmetric
/// under `k → −k`.
pub(crate) fn log_lattices(grid: &RegularGrid) -> Vec<Lattice> {
    let d = grid.ndim();
    let halves: Vec<[AxisLadder; 2]> = (0..d)
        .map(|a| {
            let half = grid.axes()[a].n_points / 2;
            let dk = grid.mode_spacing(a);
            let x: Vec<f64> = (1..=half).map(|m| (m as f64 * dk).ln()).collect();
            let w = trapezoid_weights(&x);
            let make = |sign: i64| AxisLadder {
                x: x.clone(),
                w: w.clone(),
                pos: (1..=half as i64).map(|m| grid.position_of(a, sign * m)).collect(),
                coord: (1..=half).map(|m| sign as f64 * m as f64 * dk).collect(),
                sign,
            };
            [make(1), make(-1)]
        })
        .collect();
    (0..1usize << d)
        .map(|bits| (0..d).map(|a| halves[a][(bits >> a) & 1].clone()).collect())
        .collect()
}

/// The symmetric box `|m| ≤ n/2 − 1` with uniform abscissae `k`.
fn linear_lattice(grid: &RegularGrid) -> Lattice {
    (0..grid.ndim())
        .map(|a| {
            let half = (grid.axes()[a].n_points / 2) as i64;
            let dk = grid.mode_spacing(a);
            let ms: Vec<i64> = (-(half - 1)..=half - 1).collect();
            let x: Vec<f64> = ms.iter().map(|&m| m as f64 * dk).collect();
            AxisLadder {
                w: trapezoid_weights(&x),
                pos: ms.iter().map(|&m| grid.position_of(a, m)).collect(),
                coord: x.clone(),
                x,
                sign: 0,
            }
        })
        .collect()
}

/// Iterates over all multi-indices of a lattice.
pub(crate) fn for_each_point(lattice: &Lattice, mut f: impl FnMut(&[usize])) {
    let dims: Vec<usize> = lattice.iter().map(|l| l.x.len()).collect();
    if dims.iter().any(|&n| n == 0) {
        return;
    }
    let mut js = vec![0; dims.len()];
    loop {
        f(&js);
        let mut a = dims.len();
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            js[a] += 1;
            if js[a] < dims[a] {
                break;
            }
            js[a] = 0;
        }
    }
}

fn flat_of(grid: &RegularGrid, lattice: &Lattice, js: &[usize]) -> usize {
    let pos: Vec<usize> = lattice.iter().zip(js).map(|(l, &j)| l.pos[j]).collect();
    grid.ravel(&pos)
}

fn axis_stencil(ladder: &AxisLadder, j: usize, order: usize, end_width: usize) -> Option<Vec<(usize, f64)>> {
    let len = ladder.x.len();
    let width = if len >= end_width { end_width } else { 3 };
    let nodes = stencil_nodes(j, len, width)?;
    let xs: Vec<f64> = nodes.iter().map(|&n| ladder.x[n]).collect();
    let w = fornberg(ladder.x[j], &xs, order);
    Some(nodes.into_iter().zip(w[order].iter().copied()).collect())
}

/// Stencil of `∂²ψ/∂x_i∂x_j` at a lattice point, as `(flat mode, weight)` pairs.
fn hessian_stencil(
    grid: &RegularGrid,
    lattice: &Lattice,
    js: &[usize],
    i: usize,
    j: usize,
    second_end_width: usize,
) -> Option<Vec<(usize, f64)>> {
    let mut idx = js.to_vec();
    if i == j {
        let s = axis_stencil(&lattice[i], js[i], 2, second_end_width)?;
        Some(
            s.into_iter()
                .map(|(node, c)| {
                    idx[i] = node;
                    (flat_of(grid, lattice, &idx), c)
                })
                .collect(),
        )
    } else {
        let si = axis_stencil(&lattice[i], js[i], 1, 3)?;
        let sj = axis_stencil(&lattice[j], js[j], 1, 3)?;
        let mut out = Vec::with_capacity(si.len() * sj.len());
        for &(ni, ci) in &si {
            for &(nj, cj) in &sj {
                idx[i] = ni;
                idx[j] = nj;
                out.push((flat_of(grid, lattice, &idx), ci * cj));
            }
        }
        Some(out)
    }
}

/// `scale · Σ_{i≤j} c_ij D_ijᵀ W D_ij` summed over lattices.
fn hessian_form(grid: &RegularGrid, lattices: &[Lattice], scale: f64, second_end_width: usize) -> QuadraticForm {
    let d = grid.ndim();
    let mut b = QuadraticFormBuilder::new(grid.size());
    for lattice in lattices {
        for_each_point(lattice, |js| {
            let w: f64 = lattice.iter().zip(js).map(|(l, &j)| l.w[j]).product::<f64>() * scale;
            for i in 0..d {
                for j in i..d {
                    let c = if i == j { 1.0 } else { 2.0 };
                    if let Some(st) = hessian_stencil(grid, lattice, js, i, j, second_end_width) {
                        b.add_square(c * w, &st);
                    }
                }
            }
        });
    }
    b.finish()
}

/// The smoothness precision `T⁻¹` with strength `σ`.
pub fn build_smoothness_precision(
    grid: &RegularGrid,
    strength: f64,
    backend: DiffBackend,
) -> Result<Arc<dyn QuadraticPrecision>> {
    if !(strength.is_finite() && strength > 0.0) {
        return Err(Error::InvalidArgument(format!("prior strength must be positive, got {strength}")));
    }
    let scale = 1.0 / (strength * strength);
    Ok(match backend {
        DiffBackend::FiniteDifference => Arc::new(hessian_form(grid, &log_lattices(grid), scale, 4)),
        DiffBackend::Fourier => Arc::new(FourierSmoothness::new(grid, scale)),
    })
}

/// The zero-mode precision `D_η⁻¹`.
pub fn build_zero_mode_precision(grid: &RegularGrid, eta: f64) -> Result<QuadraticForm> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    Ok(hessian_form(grid, &[linear_lattice(grid)], 1.0 / (eta * eta), 3))
}

/// Mixed second derivative of `ψ` with respect to `log|k_i|` and `log|k_j|`.
///
/// Modes with a zero coordinate get 0. Each mode is evaluated in its own
/// orthant; the Nyquist position counts as negative.
pub fn log_second_derivative(
    grid: &RegularGrid,
    psi: &[f64],
    axes: (usize, usize),
    backend: DiffBackend,
) -> Result<Vec<f64>> {
    check_len(grid.size(), psi.len())?;
    let (i, j) = axes;
    if i >= grid.ndim() || j >= grid.ndim() {
        return Err(Error::InvalidArgument(format!(
            "axis pair ({i}, {j}) out of range for a {}-dimensional grid",
            grid.ndim()
        )));
    }
    if backend == DiffBackend::Fourier {
        return Ok(FourierSmoothness::new(grid, 1.0).log_hessian_component(psi, i, j));
    }
    let mut out = vec![0.0; grid.size()];
    for lattice in log_lattices(grid) {
        for_each_point(&lattice, |js| {
            let own = lattice
                .iter()
                .zip(js)
                .enumerate()
                .all(|(a, (l, &jj))| grid.signed_index(a, l.pos[jj]).signum() == l.sign);
            if !own {
                return;
            }
            if let Some(st) = hessian_stencil(grid, &lattice, js, i, j, 4) {
                out[flat_of(grid, &lattice, js)] = st.iter().map(|&(n, c)| c * psi[n]).sum();
            }
        });
    }
    Ok(out)
}

/// Prior precision `T⁻¹ + D_η⁻¹` for one of the spectral fields.
#[derive(Clone)]
pub struct PriorPrecision {
    smoothness: Arc<dyn QuadraticPrecision>,
    zero_mode: Arc<QuadraticForm>,
}

impl PriorPrecision {
    pub fn new(grid: &RegularGrid, strength: f64, eta: f64, backend: DiffBackend) -> Result<Self> {
        Ok(Self {
            smoothness: build_smoothness_precision(grid, strength, backend)?,
            zero_mode: Arc::new(build_zero_mode_precision(grid, eta)?),
        })
    }

    pub fn smoothness(&self) -> &Arc<dyn QuadraticPrecision> {
        &self.smoothness
    }

    pub fn zero_mode(&self) -> &QuadraticForm {
        &self.zero_mode
    }

    /// `½ ψᵀ(T⁻¹ + D_η⁻¹)ψ`.
    pub fn energy(&self, psi: &[f64]) -> f64 {
        self.smoothness.energy(psi) + self.zero_mode.energy(psi)
    }

    /// Dense `T⁻¹ + D_η⁻¹`.
    pub fn dense(&self) -> faer::Mat<f64> {
        let n = self.domain_len();
        let smooth: &dyn LinOp = self.smoothness.as_ref();
        let mut m = crate::operators::dense_materialize(smooth, n).expect("cap equals operator size");
        for i in 0..n {
            for (j, v) in self.zero_mode.matrix().row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }
}

impl LinOp for PriorPrecision {
    fn domain_len(&self) -> usize {
        self.zero_mode.domain_len()
    }

    fn codomain_len(&self) -> usize {
        self.zero_mode.domain_len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.smoothness.apply(x);
        for (a, b) in y.iter_mut().zip(self.zero_mode.apply(x)) {
            *a += b;
        }
        y
    }

    fn adjoint_apply(&self, y: &[f64]) -> Vec<f64> {
        self.apply(y)
    }

    fn is_self_adjoint(&self) -> bool {
        true
    }
}

/// `½ ψᵀ(T⁻¹ + D_η⁻¹)ψ` for strength `σ` and the hyper-parameters' `η` and backend.
pub fn prior_energy(grid: &RegularGrid, psi: &[f64], strength: f64, hyper: &SmoothnessHyper) -> Result<f64> {
    check_len(grid.size(), psi.len())?;
    hyper.validate()?;
    Ok(PriorPrecision::new(grid, strength, hyper.eta, hyper.backend)?.energy(psi))
}
