use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftDirection;

use super::{flat_of, for_each_point, log_lattices, Lattice};
use crate::grid::{fft_axis, RegularGrid};
use crate::operators::LinOp;

/// Smoothness precision with derivatives taken by Fourier multiplication.
///
/// A mode function is treated as periodic along each axis of the FFT-ordered
/// harmonic lattice. Log derivatives follow from `∂²_{log y} = y²∂²_y + y∂_y`
/// and `∂_{log y_a}∂_{log y_b} = y_a y_b ∂_a∂_b`, evaluated at the same
/// points and with the same weights as the finite-difference backend.
#[derive(Clone, Debug)]
pub struct FourierSmoothness {
    grid: RegularGrid,
    scale: f64,
    lattices: Vec<Lattice>,
}

#[derive(Clone, Copy)]
enum Deriv {
    First,
    Second,
}

impl FourierSmoothness {
    pub fn new(grid: &RegularGrid, scale: f64) -> Self {
        Self {
            grid: grid.clone(),
            scale,
            lattices: log_lattices(grid),
        }
    }

    /// Spectral derivative along `axis`; odd derivatives drop the Nyquist term.
    fn derivative(&self, x: &[f64], axis: usize, kind: Deriv, sign: f64) -> Vec<f64> {
        let shape = self.grid.shape();
        let n = shape[axis];
        let stride: usize = shape[axis + 1..].iter().product();
        let period = n as f64 * self.grid.mode_spacing(axis);
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_axis(&mut buf, &shape, axis, FftDirection::Forward);
        for (flat, v) in buf.iter_mut().enumerate() {
            let j = (flat / stride) % n;
            let signed = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
            let q = 2.0 * PI * signed / period;
            *v *= match kind {
                Deriv::First if j == n / 2 => Complex64::new(0.0, 0.0),
                Deriv::First => Complex64::new(0.0, sign * q),
                Deriv::Second => Complex64::new(-q * q, 0.0),
            };
        }
        fft_axis(&mut buf, &shape, axis, FftDirection::Inverse);
        buf.iter().map(|v| v.re / n as f64).collect()
    }

    fn mixed(&self, x: &[f64], a: usize, b: usize, sign: f64) -> Vec<f64> {
        let t = self.derivative(x, a, Deriv::First, 1.0);
        let t = self.derivative(&t, b, Deriv::First, 1.0);
        t.into_iter().map(|v| v * sign).collect()
    }

    /// `∂²ψ/∂log|k_i|∂log|k_j|` at every mode with no zero coordinate.
    pub(crate) fn log_hessian_component(&self, psi: &[f64], i: usize, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; psi.len()];
        let (d1, d2) = if i == j {
            (
                self.derivative(psi, i, Deriv::First, 1.0),
                self.derivative(psi, i, Deriv::Second, 1.0),
            )
        } else {
            (Vec::new(), self.mixed(psi, i, j, 1.0))
        };
        for lattice in &self.lattices {
            for_each_point(lattice, |js| {
                let own = lattice
                    .iter()
                    .zip(js)
                    .enumerate()
                    .all(|(a, (l, &jj))| self.grid.signed_index(a, l.pos[jj]).signum() == l.sign);
                if !own {
                    return;
                }
                let flat = flat_of(&self.grid, lattice, js);
                let yi = lattice[i].coord[js[i]];
                out[flat] = if i == j {
                    yi * yi * d2[flat] + yi * d1[flat]
                } else {
                    yi * lattice[j].coord[js[j]] * d2[flat]
                };
            });
        }
        out
    }
}

impl super::QuadraticPrecision for FourierSmoothness {
    fn energy(&self, psi: &[f64]) -> f64 {
        assert_eq!(psi.len(), self.grid.size(), "operator domain mismatch");
        let d = self.grid.ndim();
        let d1: Vec<Vec<f64>> = (0..d).map(|a| self.derivative(psi, a, Deriv::First, 1.0)).collect();
        let d2: Vec<Vec<f64>> = (0..d).map(|a| self.derivative(psi, a, Deriv::Second, 1.0)).collect();
        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|a| (a + 1..d).map(move |b| (a, b))).collect();
        let dm: Vec<Vec<f64>> = pairs.iter().map(|&(a, b)| self.mixed(psi, a, b, 1.0)).collect();
        let mut e = 0.0;
        for lattice in &self.lattices {
            for_each_point(lattice, |js| {
                let flat = flat_of(&self.grid, lattice, js);
                let w: f64 = lattice.iter().zip(js).map(|(l, &j)| l.w[j]).product();
                let y: Vec<f64> = lattice.iter().zip(js).map(|(l, &j)| l.coord[j]).collect();
                for a in 0..d {
                    let v = y[a] * y[a] * d2[a][flat] + y[a] * d1[a][flat];
                    e += w * v * v;
                }
                for (p, &(a, b)) in pairs.iter().enumerate() {
                    let v = y[a] * y[b] * dm[p][flat];
                    e += 2.0 * w * v * v;
                }
            });
        }
        0.5 * self.scale * e
    }
}

impl LinOp for FourierSmoothness {
    fn domain_len(&self) -> usize {
        self.grid.size()
    }

    fn codomain_len(&self) -> usize {
        self.grid.size()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.grid.size(), "operator domain mismatch");
        let d = self.grid.ndim();
        let n = x.len();
        let d1: Vec<Vec<f64>> = (0..d).map(|a| self.derivative(x, a, Deriv::First, 1.0)).collect();
        let d2: Vec<Vec<f64>> = (0..d).map(|a| self.derivative(x, a, Deriv::Second, 1.0)).collect();
        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|a| (a + 1..d).map(move |b| (a, b))).collect();
        let dm: Vec<Vec<f64>> = pairs.iter().map(|&(a, b)| self.mixed(x, a, b, 1.0)).collect();

        let mut g1 = vec![vec![0.0; n]; d];
        let mut g2 = vec![vec![0.0; n]; d];
        let mut gm = vec![vec![0.0; n]; pairs.len()];
        for lattice in &self.lattices {
            for_each_point(lattice, |js| {
                let flat = flat_of(&self.grid, lattice, js);
                let w: f64 = lattice.iter().zip(js).map(|(l, &j)| l.w[j]).product();
                let y: Vec<f64> = lattice.iter().zip(js).map(|(l, &j)| l.coord[j]).collect();
                for a in 0..d {
                    let v = y[a] * y[a] * d2[a][flat] + y[a] * d1[a][flat];
                    g2[a][flat] += w * y[a] * y[a] * v;
                    g1[a][flat] += w * y[a] * v;
                }
                for (p, &(a, b)) in pairs.iter().enumerate() {
                    let v = y[a] * y[b] * dm[p][flat];
                    gm[p][flat] += 2.0 * w * y[a] * y[b] * v;
                }
            });
        }

        let mut out = vec![0.0; n];
        let mut acc = |v: Vec<f64>| {
            for (o, t) in out.iter_mut().zip(v) {
                *o += t;
            }
        };
        for a in 0..d {
            acc(self.derivative(&g2[a], a, Deriv::Second, 1.0));
            acc(self.derivative(&g1[a], a, Deriv::First, -1.0));
        }
        for (p, &(a, b)) in pairs.iter().enumerate() {
            acc(self.mixed(&gm[p], a, b, 1.0));
        }
        out.iter_mut().for_each(|v| *v *= self.scale);
        out
    }

    fn adjoint_apply(&self, y: &[f64]) -> Vec<f64> {
        self.apply(y)
    }

    fn is_self_adjoint(&self) -> bool {
        true
    }
}
