#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use specfield::grid::RegularGrid;
use specfield::operators::LinOp;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    diff / inf_norm(b).max(f64::MIN_POSITIVE)
}

/// Dense matrix of an operator by applying it to unit vectors.
pub fn dense(op: &dyn LinOp) -> DMatrix<f64> {
    let (rows, cols) = (op.codomain_len(), op.domain_len());
    let mut m = DMatrix::zeros(rows, cols);
    let mut e = vec![0.0; cols];
    for j in 0..cols {
        e[j] = 1.0;
        let col = op.apply(&e);
        e[j] = 0.0;
        for (i, v) in col.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    m
}

pub fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Circulant matrix of a harmonic multiplier, built from explicit DFT sums.
pub fn circulant_oracle(grid: &RegularGrid, multiplier: &[f64]) -> DMatrix<f64> {
    let n = grid.size();
    let shape = grid.shape();
    let phase = |x: &[usize], k: &[usize]| -> f64 {
        x.iter()
            .zip(k)
            .zip(&shape)
            .map(|((&xi, &ki), &ni)| 2.0 * std::f64::consts::PI * (xi * ki) as f64 / ni as f64)
            .sum()
    };
    let cells: Vec<Vec<usize>> = (0..n).map(|f| grid.unravel(f)).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let mut acc = 0.0;
        for (k, idx) in cells.iter().enumerate() {
            acc += multiplier[k] * (phase(&cells[i], idx) - phase(&cells[j], idx)).cos();
        }
        acc / n as f64
    })
}

/// Multiplier values that are symmetric under `k → −k`.
pub fn symmetric_positive(grid: &RegularGrid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut d = vec![0.0; grid.size()];
    for k in 0..grid.size() {
        let neg = grid.negated(k);
        if neg >= k {
            let v = 0.5 + rng.random::<f64>() * 2.0;
            d[k] = v;
            d[neg] = v;
        }
    }
    d
}
