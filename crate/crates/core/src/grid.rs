//! Regular periodic grids, scalar fields on them and harmonic transforms.
//!
//! Fields are stored row-major with axis 0 as time. Harmonic fields use the
//! same flat layout in FFT index order (`0, 1, .., n/2-1, -n/2, .., -1` per
//! axis). See [`crate::convention`] for the normalization.

use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::convention;
use crate::error::{Error, Result};

/// Relative tolerance for deciding that an inverse transform is real.
pub const REALITY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub n_points: usize,
    pub length: f64,
}

/// A periodic, regularly spaced grid with one to three axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Axis>", into = "Vec<Axis>")]
pub struct RegularGrid {
    axes: Vec<Axis>,
    cell_volume: f64,
    mode_volume: f64,
}

impl TryFrom<Vec<Axis>> for RegularGrid {
    type Error = Error;

    fn try_from(axes: Vec<Axis>) -> Result<Self> {
        let dims: Vec<(usize, f64)> = axes.iter().map(|a| (a.n_points, a.length)).collect();
        RegularGrid::new(&dims)
    }
}

impl From<RegularGrid> for Vec<Axis> {
    fn from(g: RegularGrid) -> Self {
        g.axes
    }
}

/// Builds a grid from `(n_points, length)` pairs.
pub fn make_grid(dims: &[(usize, f64)]) -> Result<RegularGrid> {
    RegularGrid::new(dims)
}

impl RegularGrid {
    pub fn new(dims: &[(usize, f64)]) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(Error::InvalidGrid(format!(
                "expected 1 to 3 axes, got {}",
                dims.len()
            )));
        }
        let mut axes = Vec::with_capacity(dims.len());
        for (i, &(n, length)) in dims.iter().enumerate() {
            if n < 4 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "axis {i}: n_points must be even and >= 4, got {n}"
                )));
            }
            if !(length.is_finite() && length > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "axis {i}: length must be positive and finite, got {length}"
                )));
            }
            axes.push(Axis { n_points: n, length });
        }
        let cell_volume = axes.iter().map(|a| a.length / a.n_points as f64).product();
        let mode_volume = axes.iter().map(|a| 2.0 * PI / a.length).product();
        Ok(Self {
            axes,
            cell_volume,
            mode_volume,
        })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n_points).collect()
    }

    pub fn size(&self) -> usize {
        self.axes.iter().map(|a| a.n_points).product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn total_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.length).product()
    }

    /// Volume of one cell of the harmonic lattice, `Π 2π/L`.
    pub fn mode_volume(&self) -> f64 {
        self.mode_volume
    }

    /// Harmonic spacing `2π/L` of an axis.
    pub fn mode_spacing(&self, axis: usize) -> f64 {
        2.0 * PI / self.axes[axis].length
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.ndim()];
        for a in (0..self.ndim().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * self.axes[a + 1].n_points;
        }
        strides
    }

    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.ndim()];
        for a in (0..self.ndim()).rev() {
            let n = self.axes[a].n_points;
            idx[a] = flat % n;
            flat /= n;
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(self.axes.iter())
            .fold(0, |acc, (&i, a)| acc * a.n_points + i)
    }

    /// Physical coordinate of cell `i` on `axis`; axes are centered at zero.
    pub fn cell_coordinate(&self, axis: usize, i: usize) -> f64 {
        let a = self.axes[axis];
        -0.5 * a.length + i as f64 * a.length / a.n_points as f64
    }

    /// Signed harmonic index of FFT-order position `i` on `axis`.
    pub fn signed_index(&self, axis: usize, i: usize) -> i64 {
        let n = self.axes[axis].n_points;
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// FFT-order position of a signed harmonic index (wrapped periodically).
    pub fn position_of(&self, axis: usize, m: i64) -> usize {
        let n = self.axes[axis].n_points as i64;
        m.rem_euclid(n) as usize
    }

    /// Flat index of the mode `-k` for the mode at `flat`.
    pub fn negated(&self, flat: usize) -> usize {
        let idx = self.unravel(flat);
        let neg: Vec<usize> = idx
            .iter()
            .zip(self.axes.iter())
            .map(|(&i, a)| (a.n_points - i) % a.n_points)
            .collect();
        self.ravel(&neg)
    }

    /// Whether the mode at `flat` is its own conjugate partner (DC/Nyquist on every axis).
    pub fn is_self_conjugate(&self, flat: usize) -> bool {
        self.negated(flat) == flat
    }
}

/// Real scalar field sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: RegularGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: RegularGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.size() {
            return Err(Error::DomainMismatch {
                expected: grid.size(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field value at cell {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: &RegularGrid) -> Self {
        Self {
            values: vec![0.0; grid.size()],
            grid: grid.clone(),
        }
    }

    pub fn constant(grid: &RegularGrid, c: f64) -> Self {
        Self {
            values: vec![c; grid.size()],
            grid: grid.clone(),
        }
    }

    /// Builds a field from a function of the multi-index.
    pub fn from_fn(grid: &RegularGrid, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let values = (0..grid.size()).map(|i| f(&grid.unravel(i))).collect();
        Self::new(grid.clone(), values)
    }

    pub fn grid(&self) -> &RegularGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Complex field over the harmonic lattice of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicField {
    grid: RegularGrid,
    values: Vec<Complex64>,
    hermitian: bool,
}

impl HarmonicField {
    pub fn new(grid: RegularGrid, values: Vec<Complex64>, hermitian: bool) -> Result<Self> {
        if values.len() != grid.size() {
            return Err(Error::DomainMismatch {
                expected: grid.size(),
                got: values.len(),
            });
        }
        Ok(Self {
            grid,
            values,
            hermitian,
        })
    }

    pub fn zeros(grid: &RegularGrid) -> Self {
        Self {
            values: vec![Complex64::new(0.0, 0.0); grid.size()],
            grid: grid.clone(),
            hermitian: true,
        }
    }

    pub fn grid(&self) -> &RegularGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Whether the field is tagged as the transform of a real field.
    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// `max |v(-k) - v(k)*| / max |v|`.
    pub fn hermitian_violation(&self) -> f64 {
        let scale = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let worst = (0..self.values.len())
            .map(|i| (self.values[self.grid.negated(i)] - self.values[i].conj()).norm())
            .fold(0.0, f64::max);
        worst / scale
    }

    /// Periodogram `|h(k)|²/V` per mode.
    pub fn periodogram(&self) -> Vec<f64> {
        let v = self.grid.total_volume();
        self.values
            .iter()
            .map(|h| convention::periodogram(h.norm_sqr(), v))
            .collect()
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place unnormalized N-dimensional DFT over a row-major buffer.
pub(crate) fn fft_nd(buf: &mut [Complex64], shape: &[usize], direction: FftDirection) {
    debug_assert_eq!(buf.len(), shape.iter().product::<usize>());
    for axis in 0..shape.len() {
        fft_axis(buf, shape, axis, direction);
    }
}

/// Unnormalized DFT of a single axis of a row-major buffer.
pub(crate) fn fft_axis(buf: &mut [Complex64], shape: &[usize], axis: usize, direction: FftDirection) {
    let total: usize = shape.iter().product();
    let n = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft(n, direction));
    if stride == 1 {
        fft.process(buf);
        return;
    }
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let block = n * stride;
    for outer in 0..total / block {
        let base = outer * block;
        for inner in 0..stride {
            for (j, l) in line.iter_mut().enumerate() {
                *l = buf[base + inner + j * stride];
            }
            fft.process(&mut line);
            for (j, l) in line.iter().enumerate() {
                buf[base + inner + j * stride] = *l;
            }
        }
    }
}

/// Forward transform of real cell values into harmonic coefficients.
pub(crate) fn forward_raw(grid: &RegularGrid, values: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut buf, &grid.shape(), FftDirection::Forward);
    let s = convention::forward_scale(grid.cell_volume());
    buf.iter_mut().for_each(|v| *v *= s);
    buf
}

/// Inverse transform returning the complex result.
pub(crate) fn inverse_raw(grid: &RegularGrid, values: &[Complex64]) -> Vec<Complex64> {
    let mut buf = values.to_vec();
    fft_nd(&mut buf, &grid.shape(), FftDirection::Inverse);
    let s = convention::inverse_scale(grid.total_volume());
    buf.iter_mut().for_each(|v| *v *= s);
    buf
}

pub fn fft_forward(f: &Field) -> HarmonicField {
    HarmonicField {
        values: forward_raw(&f.grid, &f.values),
        grid: f.grid.clone(),
        hermitian: true,
    }
}

/// Inverse transform; fails if the result carries a non-negligible imaginary part.
pub fn fft_inverse(h: &HarmonicField) -> Result<Field> {
    let out = inverse_raw(&h.grid, &h.values);
    let re_scale = out.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let im = out.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    if re_scale > 0.0 && im > REALITY_TOLERANCE * re_scale {
        return Err(Error::NonHermitian {
            violation: im / re_scale,
        });
    }
    Field::new(h.grid.clone(), out.into_iter().map(|v| v.re).collect())
}

/// Continuum-consistent inner product `Σ a b dV`.
pub fn inner_product(a: &Field, b: &Field) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let dv = a.grid.cell_volume();
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum::<f64>() * dv)
}

/// Harmonic inner product `(1/V) Σ a* b`, real part.
pub fn harmonic_inner_product(a: &HarmonicField, b: &HarmonicField) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let v = a.grid.total_volume();
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x.conj() * y).re)
        .sum::<f64>()
        / v)
}

/// Harmonic coordinates `k = 2π m / L` per axis in FFT order.
#[derive(Clone, Debug)]
pub struct KCoords {
    grid: RegularGrid,
    axes: Vec<Vec<f64>>,
}

pub fn k_coords(grid: &RegularGrid) -> KCoords {
    let axes = (0..grid.ndim())
        .map(|a| {
            let dk = grid.mode_spacing(a);
            (0..grid.axes()[a].n_points)
                .map(|i| grid.signed_index(a, i) as f64 * dk)
                .collect()
        })
        .collect();
    KCoords {
        grid: grid.clone(),
        axes,
    }
}

impl KCoords {
    pub fn grid(&self) -> &RegularGrid {
        &self.grid
    }

    pub fn axis(&self, a: usize) -> &[f64] {
        &self.axes[a]
    }

    /// Coordinate vector of the mode at `flat`.
    pub fn k(&self, flat: usize) -> Vec<f64> {
        self.grid
            .unravel(flat)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.axes[a][i])
            .collect()
    }

    pub fn radius(&self, flat: usize) -> f64 {
        self.k(flat).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn len(&self) -> usize {
        self.grid.size()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.size() == 0
    }
}
