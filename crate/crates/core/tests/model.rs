mod common;

use common::rng;
use rand::Rng;
use specfield::grid::{k_coords, RegularGrid};
use specfield::model::{
    sde_char, sde_to_spectrum, structured_spectrum, SdeSpec, SdeTerm, StructuredParams, OSCILLATOR_PARAMS,
    WAVE2D_PARAMS,
};

fn oscillator() -> SdeSpec {
    let (a, b, m2) = OSCILLATOR_PARAMS;
    SdeSpec::oscillator(a, b, m2)
}

#[test]
fn oscillator_matches_closed_form() {
    let (alpha, beta, m2) = OSCILLATOR_PARAMS;
    for (n, length) in [(1024, 1.0), (512, 7.5)] {
        let g = RegularGrid::new(&[(n, length)]).unwrap();
        let kc = k_coords(&g);
        let p = sde_to_spectrum(&oscillator(), &kc).unwrap();
        let worst = (0..g.size())
            .map(|i| {
                let w = kc.k(i)[0];
                let exact = 1.0 / ((m2 - alpha * w * w).powi(2) + (beta * w).powi(2));
                ((p[i] - exact) / exact).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-10, "max relative deviation {worst:e}");
    }
}

#[test]
fn characteristic_function_at_zero_is_the_mass() {
    let g1 = RegularGrid::new(&[(64, 1.0)]).unwrap();
    assert_eq!(sde_char(&oscillator(), &k_coords(&g1)).unwrap()[0].re, 0.5);
    let (a, b, c, r, m2) = WAVE2D_PARAMS;
    let g2 = RegularGrid::new(&[(16, 1.0), (16, 1.0)]).unwrap();
    let f = sde_char(&SdeSpec::wave2d(a, b, c, r, m2), &k_coords(&g2)).unwrap();
    assert_eq!(f[0].re, 0.1);
    assert_eq!(f[0].im, 0.0);
}

/// Nyquist rows carry a single signed frequency, so they are excluded.
#[test]
fn characteristic_function_is_hermitian() {
    let (a, b, c, r, m2) = WAVE2D_PARAMS;
    let g = RegularGrid::new(&[(12, 1.0), (10, 2.0)]).unwrap();
    let f = sde_char(&SdeSpec::wave2d(a, b, c, r, m2), &k_coords(&g)).unwrap();
    for k in 0..g.size() {
        let idx = g.unravel(k);
        let nyquist = idx.iter().zip(g.shape()).any(|(&i, n)| 2 * i == n);
        if g.is_self_conjugate(k) || nyquist {
            continue;
        }
        let diff = (f[g.negated(k)] - f[k].conj()).norm();
        assert!(diff <= 1e-14 * f[k].norm(), "mode {k}");
    }
}

#[test]
fn resonance_sits_near_the_analytic_peak() {
    let g = RegularGrid::new(&[(4096, 200.0)]).unwrap();
    let kc = k_coords(&g);
    let p = sde_to_spectrum(&oscillator(), &kc).unwrap();
    let best = (0..g.size()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
    let w = kc.k(best)[0].abs();
    assert!((w - 40.76).abs() < g.mode_spacing(0), "peak at {w}");
}

#[test]
fn structured_spectrum_matches_formula() {
    let g = RegularGrid::new(&[(32, 1.0), (32, 2.0)]).unwrap();
    let kc = k_coords(&g);
    let params = StructuredParams::default();
    let p = structured_spectrum(&kc, &params).unwrap();
    assert!((p[0] - 2.0 / 1.21).abs() < 1e-14);
    let mut r = rng(3);
    for _ in 0..50 {
        let i = r.random_range(0..g.size());
        let k = kc.k(i);
        let a = 1.1 - (0.0025 * k[1] * k[1] - 0.0011 * k[0] * k[0]).sin();
        let b = 0.002 * k[1] + 0.004 * k[0];
        let exact = 2.0 / (a * a + b * b);
        assert!(((p[i] - exact) / exact).abs() < 1e-12);
    }
}

#[test]
fn general_terms_combine_derivative_orders() {
    let g = RegularGrid::new(&[(8, 1.0), (6, 1.0)]).unwrap();
    let kc = k_coords(&g);
    let spec = SdeSpec::new(vec![SdeTerm { orders: vec![1, 2], coeff: 3.0 }]);
    let f = sde_char(&spec, &kc).unwrap();
    for (i, v) in f.iter().enumerate() {
        let k = kc.k(i);
        // 3 (i k0) (i k1)² = −3i k0 k1²
        let expect = -3.0 * k[0] * k[1] * k[1];
        assert!(v.re.abs() < 1e-12 && (v.im - expect).abs() < 1e-9 * expect.abs().max(1.0));
    }
}
