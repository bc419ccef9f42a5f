mod common;

use std::f64::consts::PI;

use common::{normals, rng};
use proptest::prelude::*;
use rustfft::num_complex::Complex64;
use specfield::grid::{fft_forward, fft_inverse, harmonic_inner_product, inner_product, Field, RegularGrid};

fn brute_force_dft(f: &Field) -> Vec<Complex64> {
    let g = f.grid();
    let shape = g.shape();
    let dv = g.cell_volume();
    (0..g.size())
        .map(|k| {
            let kk = g.unravel(k);
            let mut acc = Complex64::new(0.0, 0.0);
            for (x, v) in f.values().iter().enumerate() {
                let xx = g.unravel(x);
                let arg: f64 = (0..shape.len())
                    .map(|a| -2.0 * PI * (kk[a] * xx[a]) as f64 / shape[a] as f64)
                    .sum();
                acc += Complex64::from_polar(*v, arg);
            }
            acc * dv
        })
        .collect()
}

fn random_field(grid: &RegularGrid, seed: u64) -> Field {
    Field::new(grid.clone(), normals(&mut rng(seed), grid.size())).unwrap()
}

#[test]
fn forward_matches_direct_dft_sum() {
    for dims in [vec![(16, 3.0)], vec![(8, 1.0), (6, 2.5)], vec![(4, 1.0), (4, 2.0), (6, 0.5)]] {
        let g = RegularGrid::new(&dims).unwrap();
        let f = random_field(&g, 11);
        let fast = fft_forward(&f);
        let slow = brute_force_dft(&f);
        let scale = slow.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let err = fast
            .values()
            .iter()
            .zip(&slow)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10 * scale, "dims {dims:?}: {err:e}");
    }
}

#[test]
fn parseval_against_direct_sum() {
    let g = RegularGrid::new(&[(12, 2.0), (8, 1.0)]).unwrap();
    let (a, b) = (random_field(&g, 1), random_field(&g, 2));
    let real = inner_product(&a, &b).unwrap();
    let (ha, hb) = (brute_force_dft(&a), brute_force_dft(&b));
    let oracle = ha.iter().zip(&hb).map(|(x, y)| (x.conj() * y).re).sum::<f64>() / g.total_volume();
    let fast = harmonic_inner_product(&fft_forward(&a), &fft_forward(&b)).unwrap();
    assert!((real - oracle).abs() < 1e-10 * oracle.abs());
    assert!((fast - real).abs() < 1e-10 * real.abs());
}

fn grid_strategy() -> impl Strategy<Value = RegularGrid> {
    prop_oneof![
        (2usize..40, 0.1f64..20.0).prop_map(|(h, l)| RegularGrid::new(&[(2 * h, l)]).unwrap()),
        (2usize..10, 2usize..10, 0.1f64..5.0)
            .prop_map(|(a, b, l)| RegularGrid::new(&[(2 * a, l), (2 * b, 1.0)]).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_is_identity(g in grid_strategy(), seed in any::<u64>()) {
        let f = random_field(&g, seed);
        let back = fft_inverse(&fft_forward(&f)).unwrap();
        let scale = f.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in back.values().iter().zip(f.values()) {
            prop_assert!((x - y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn forward_output_is_hermitian(g in grid_strategy(), seed in any::<u64>()) {
        let h = fft_forward(&random_field(&g, seed));
        prop_assert!(h.hermitian_violation() < 1e-12);
    }

    #[test]
    fn parseval_holds(g in grid_strategy(), seed in any::<u64>()) {
        let (a, b) = (random_field(&g, seed), random_field(&g, seed.wrapping_add(1)));
        let real = inner_product(&a, &b).unwrap();
        let harm = harmonic_inner_product(&fft_forward(&a), &fft_forward(&b)).unwrap();
        let norm = (inner_product(&a, &a).unwrap() * inner_product(&b, &b).unwrap()).sqrt();
        prop_assert!((real - harm).abs() <= 1e-10 * norm);
    }

    #[test]
    fn transform_is_linear(g in grid_strategy(), seed in any::<u64>(), alpha in -5.0f64..5.0, beta in -5.0f64..5.0) {
        let (a, b) = (random_field(&g, seed), random_field(&g, seed ^ 0x5eed));
        let mix = Field::new(
            g.clone(),
            a.values().iter().zip(b.values()).map(|(x, y)| alpha * x + beta * y).collect(),
        ).unwrap();
        let (ha, hb, hm) = (fft_forward(&a), fft_forward(&b), fft_forward(&mix));
        let scale = ha.values().iter().chain(hb.values()).map(|v| v.norm()).fold(0.0, f64::max)
            * (alpha.abs() + beta.abs()).max(1.0);
        for ((x, y), m) in ha.values().iter().zip(hb.values()).zip(hm.values()) {
            prop_assert!((x * alpha + y * beta - m).norm() <= 1e-12 * scale);
        }
    }
}
