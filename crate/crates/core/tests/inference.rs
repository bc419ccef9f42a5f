mod common;

use std::f64::consts::FRAC_PI_2;

use common::{circulant_oracle, max_rel, normals, rng, to_vec};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use specfield::grid::{fft_forward, Field, RegularGrid};
use specfield::inference::{
    curvature_uncertainty, minimize_map, wiener_reconstruct, CurvatureConfig, Likelihood, MapResult,
    MarginalLikelihood, NoisyDataProblem, OptimizerConfig, PerfectDataProblem, PriorTerms, SpectralProblem,
    WienerConfig,
};
use specfield::model::{SpectralParams, DEFAULT_EPSILON, DEFAULT_NU};
use specfield::operators::{LinOp, MaskResponseOp};
use specfield::priors::SmoothnessHyper;
use specfield::synth::sample_field;

const HYPER: SmoothnessHyper = SmoothnessHyper {
    sigma: 2.0,
    mu: 2.0,
    eta: specfield::priors::DEFAULT_ETA,
    backend: specfield::priors::DiffBackend::FiniteDifference,
};

fn random_params(grid: &RegularGrid, r: &mut ChaCha8Rng) -> SpectralParams {
    let tau = normals(r, grid.size());
    let delta = (0..grid.size()).map(|_| r.random_range(-1.0..1.0)).collect();
    SpectralParams::new(grid, tau, delta, DEFAULT_EPSILON, DEFAULT_NU).unwrap()
}

/// Log spectrum with `s(−k) = s(k)`, as for any real field.
fn symmetric_log_spectrum(grid: &RegularGrid, r: &mut ChaCha8Rng) -> Vec<f64> {
    let raw = normals(r, grid.size());
    (0..grid.size()).map(|k| 0.5 * (raw[k] + raw[grid.negated(k)])).collect()
}

fn symmetric_params(grid: &RegularGrid, r: &mut ChaCha8Rng) -> SpectralParams {
    let tau = symmetric_log_spectrum(grid, r);
    SpectralParams::new(grid, tau, vec![0.0; grid.size()], DEFAULT_EPSILON, DEFAULT_NU).unwrap()
}

fn random_field(grid: &RegularGrid, r: &mut ChaCha8Rng) -> Field {
    Field::new(grid.clone(), normals(r, grid.size())).unwrap()
}

fn random_mask(grid: &RegularGrid, r: &mut ChaCha8Rng, keep: f64) -> MaskResponseOp {
    let mut m: Vec<bool> = (0..grid.size()).map(|_| r.random::<f64>() < keep).collect();
    m[0] = true;
    MaskResponseOp::from_mask(grid, &m).unwrap()
}

/// Central differences of the Hamiltonian in `τ` and `δ`.
fn numeric_gradient(problem: &dyn SpectralProblem, p: &SpectralParams, h: f64) -> (Vec<f64>, Vec<f64>) {
    let post = problem.posterior();
    let n = p.tau().len();
    let eval = |tau: Vec<f64>, delta: Vec<f64>| {
        let q = SpectralParams::new(p.grid(), tau, delta, p.epsilon(), p.nu()).unwrap();
        post.hamiltonian(&q).unwrap()
    };
    let mut gt = vec![0.0; n];
    let mut gd = vec![0.0; n];
    for k in 0..n {
        let (mut up, mut dn) = (p.tau().to_vec(), p.tau().to_vec());
        up[k] += h;
        dn[k] -= h;
        gt[k] = (eval(up, p.delta().to_vec()) - eval(dn, p.delta().to_vec())) / (2.0 * h);
        let (mut up, mut dn) = (p.delta().to_vec(), p.delta().to_vec());
        up[k] += h;
        dn[k] -= h;
        gd[k] = (eval(p.tau().to_vec(), up) - eval(p.tau().to_vec(), dn)) / (2.0 * h);
    }
    (gt, gd)
}

fn gradient_error(problem: &dyn SpectralProblem, p: &SpectralParams) -> f64 {
    let (_, gt, gd) = problem.posterior().hamiltonian_and_gradient(p).unwrap();
    let (nt, nd) = numeric_gradient(problem, p, 1e-5);
    max_rel(&[gt, gd].concat(), &[nt, nd].concat())
}

#[test]
fn perfect_gradients_match_central_differences() {
    let mut r = rng(101);
    for trial in 0..10 {
        let g = if trial % 2 == 0 {
            RegularGrid::new(&[(64, 1.0)]).unwrap()
        } else {
            RegularGrid::new(&[(8, 1.0), (8, 2.0)]).unwrap()
        };
        let mut prob = PerfectDataProblem::new(random_field(&g, &mut r), &HYPER, DEFAULT_EPSILON, DEFAULT_NU).unwrap();
        let p = random_params(&g, &mut r);
        prob.set_params(p.clone()).unwrap();
        let err = gradient_error(&prob, &p);
        assert!(err < 1e-5, "trial {trial}: {err:e}");
    }
}

#[test]
fn marginal_gradients_match_central_differences() {
    let mut r = rng(202);
    for trial in 0..10 {
        let g = if trial % 2 == 0 {
            RegularGrid::new(&[(32, 1.0)]).unwrap()
        } else {
            RegularGrid::new(&[(4, 1.0), (8, 1.0)]).unwrap()
        };
        let resp = random_mask(&g, &mut r, 0.7);
        let data = normals(&mut r, resp.n_observed());
        let mut prob = NoisyDataProblem::new(data, resp, 0.5, &HYPER, DEFAULT_EPSILON, DEFAULT_NU).unwrap();
        let p = random_params(&g, &mut r);
        prob.set_params(p.clone()).unwrap();
        let err = gradient_error(&prob, &p);
        assert!(err < 1e-4, "trial {trial}: {err:e}");
    }
}

fn selection(resp: &MaskResponseOp) -> DMatrix<f64> {
    let n = resp.grid().size();
    DMatrix::from_fn(resp.n_observed(), n, |i, j| if resp.observed()[i] == j { 1.0 } else { 0.0 })
}

/// `½(log|Φ| − log|D| − jᵀDj)` with dense field-space matrices.
fn dense_marginal(grid: &RegularGrid, log_p: &[f64], resp: &MaskResponseOp, sigma: f64, d: &[f64]) -> f64 {
    let dv = grid.cell_volume();
    let lambda: Vec<f64> = log_p.iter().map(|s| s.exp() / dv).collect();
    let phi = circulant_oracle(grid, &lambda);
    let r = selection(resp);
    let rt_r = r.transpose() * &r / (sigma * sigma);
    let d_inv = phi.clone().try_inverse().unwrap() + rt_r;
    let j = r.transpose() * DVector::from_column_slice(d) / (sigma * sigma);
    let chol = d_inv.clone().cholesky().unwrap();
    let dj = chol.solve(&j);
    let log_det_phi: f64 = lambda.iter().map(|l| l.ln()).sum();
    let log_det_d_inv = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    0.5 * (log_det_phi + log_det_d_inv - j.dot(&dj))
}

#[test]
fn marginal_matches_dense_field_space_oracle() {
    let mut r = rng(303);
    for dims in [vec![(24, 1.0)], vec![(6, 1.0), (4, 2.0)]] {
        let g = RegularGrid::new(&dims).unwrap();
        let resp = random_mask(&g, &mut r, 0.6);
        let data = normals(&mut r, resp.n_observed());
        let lik = MarginalLikelihood::new(resp.clone(), 0.8, data.clone(), 4096).unwrap();
        let log_p = symmetric_log_spectrum(&g, &mut r);
        let value = lik.value(&log_p).unwrap();
        let constant = 0.5 * data.iter().map(|d| d * d).sum::<f64>() / 0.64;
        let oracle = dense_marginal(&g, &log_p, &resp, 0.8, &data) + constant;
        assert!((value - oracle).abs() < 1e-8 * oracle.abs().max(1.0), "{value} vs {oracle}");
    }
}

#[test]
fn marginal_vanishes_without_information() {
    let g = RegularGrid::new(&[(16, 1.0)]).unwrap();
    let log_p = normals(&mut rng(4), 16);
    let empty = MarginalLikelihood::new(MaskResponseOp::from_mask(&g, &[false; 16]).unwrap(), 1.0, vec![], 64).unwrap();
    let (v, grad) = empty.value_and_gradient(&log_p).unwrap();
    assert_eq!(v, 0.0);
    assert!(grad.iter().all(|x| *x == 0.0));

    let full = MaskResponseOp::from_mask(&g, &[true; 16]).unwrap();
    let d = normals(&mut rng(5), 16);
    let constant = 0.5 * d.iter().map(|x| x * x).sum::<f64>() / 1e12;
    let loud = MarginalLikelihood::new(full, 1e6, d, 64).unwrap();
    let (v, grad) = loud.value_and_gradient(&log_p).unwrap();
    assert!((v - constant).abs() < 1e-8, "{v}");
    assert!(grad.iter().all(|x| x.abs() < 1e-8));
}

#[test]
fn noiseless_marginal_tends_to_perfect_gradient() {
    let g = RegularGrid::new(&[(32, 1.0)]).unwrap();
    let mut r = rng(6);
    let phi = random_field(&g, &mut r);
    let full = MaskResponseOp::from_mask(&g, &[true; 32]).unwrap();
    let lik = MarginalLikelihood::new(full, 1e-5, phi.values().to_vec(), 64).unwrap();
    let perfect = specfield::inference::PerfectLikelihood::new(&phi);
    let log_p = symmetric_log_spectrum(&g, &mut r);
    let (_, gm) = lik.value_and_gradient(&log_p).unwrap();
    let (_, gp) = perfect.value_and_gradient(&log_p).unwrap();
    assert!(max_rel(&gm, &gp) < 1e-4, "{:e}", max_rel(&gm, &gp));
}

#[test]
fn priors_off_minimum_is_the_log_periodogram() {
    let g = RegularGrid::new(&[(128, 1.0)]).unwrap();
    let phi = random_field(&g, &mut rng(7));
    let prob = PerfectDataProblem::without_smoothness(phi.clone(), DEFAULT_EPSILON, DEFAULT_NU).unwrap();
    let cfg = OptimizerConfig {
        grad_tol: Some(1e-8),
        ..OptimizerConfig::default()
    };
    let res = minimize_map(&prob, &cfg).unwrap();
    assert!(res.converged, "{}", res.message);
    let periodogram: Vec<f64> = fft_forward(&phi).values().iter().map(|h| h.norm_sqr()).collect();
    for k in 0..g.size() {
        assert!((res.tau_bar[k] - periodogram[k].ln()).abs() < 1e-4, "mode {k}");
        assert!(res.delta_bar[k].abs() < 1e-4, "mode {k}");
    }
    let unc = curvature_uncertainty(&res, &prob, &CurvatureConfig::default()).unwrap();
    for s in &unc.sigma_tau {
        assert!((s - 2f64.sqrt()).abs() < 1e-4, "{s}");
    }
}

/// `H(τ, t)` including the `Σ log(1 + t²)` term of the change of variables.
fn gradient_in_t(problem: &dyn SpectralProblem, tau: &[f64], t: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let delta: Vec<f64> = t.iter().map(|v| v.atan()).collect();
    let p = SpectralParams::new(problem.params().grid(), tau.to_vec(), delta, DEFAULT_EPSILON, DEFAULT_NU).unwrap();
    let (_, gt, gd) = problem.posterior().hamiltonian_and_gradient(&p).unwrap();
    let gtt = gd
        .iter()
        .zip(t)
        .map(|(g, t)| g / (1.0 + t * t) + 2.0 * t / (1.0 + t * t))
        .collect();
    (gt, gtt)
}

#[test]
fn curvature_matches_finite_difference_hessian() {
    let g = RegularGrid::new(&[(16, 1.0)]).unwrap();
    let mut r = rng(8);
    let prob = PerfectDataProblem::new(random_field(&g, &mut r), &HYPER, DEFAULT_EPSILON, DEFAULT_NU).unwrap();
    let phi = prob.phi().clone();
    let tau: Vec<f64> = fft_forward(&phi)
        .periodogram()
        .iter()
        .map(|p| p.ln() + 0.3 * r.random_range(-1.0..1.0))
        .collect();
    let t: Vec<f64> = (0..16).map(|_| r.random_range(-0.03..0.03)).collect();
    let n = 16;
    let h = 1e-5;
    let mut htt = DMatrix::zeros(n, n);
    let mut hdd = DMatrix::zeros(n, n);
    for j in 0..n {
        let (mut tu, mut td) = (tau.clone(), tau.clone());
        tu[j] += h;
        td[j] -= h;
        let (a, _) = gradient_in_t(&prob, &tu, &t);
        let (b, _) = gradient_in_t(&prob, &td, &t);
        let (mut su, mut sd) = (t.clone(), t.clone());
        su[j] += h;
        sd[j] -= h;
        let (_, c) = gradient_in_t(&prob, &tau, &su);
        let (_, d) = gradient_in_t(&prob, &tau, &sd);
        for i in 0..n {
            htt[(i, j)] = (a[i] - b[i]) / (2.0 * h);
            hdd[(i, j)] = (c[i] - d[i]) / (2.0 * h);
        }
    }
    let sym = |m: &DMatrix<f64>| (m + m.transpose()) / 2.0;
    let var_tau = sym(&htt).try_inverse().unwrap().diagonal();
    let var_t = sym(&hdd).try_inverse().unwrap().diagonal();

    let map = MapResult {
        tau_bar: tau.clone(),
        delta_bar: t.iter().map(|v| v.atan()).collect(),
        hamiltonian_trace: vec![],
        converged: true,
        uncertainty_log_spectrum: None,
        iterations: 0,
        gradient_norm: 0.0,
        message: String::new(),
    };
    let unc = curvature_uncertainty(&map, &prob, &CurvatureConfig::default()).unwrap();
    assert!(!unc.fallback_used);
    let got_tau: Vec<f64> = unc.sigma_tau.iter().map(|s| s * s).collect();
    let got_t: Vec<f64> = unc.sigma_tan_delta.iter().map(|s| s * s).collect();
    assert!(max_rel(&got_tau, &to_vec(&var_tau)) < 1e-4);
    assert!(max_rel(&got_t, &to_vec(&var_t)) < 1e-4);
}

fn noisy_problem(g: &RegularGrid, seed: u64, sigma: f64) -> (NoisyDataProblem, SpectralParams) {
    let mut r = rng(seed);
    let resp = random_mask(g, &mut r, 0.6);
    let data = normals(&mut r, resp.n_observed());
    let prob = NoisyDataProblem::with_priors(
        data,
        resp,
        sigma,
        PriorTerms::without_smoothness(),
        DEFAULT_EPSILON,
        DEFAULT_NU,
        4096,
    )
    .unwrap();
    let p = symmetric_params(g, &mut r);
    (prob, p)
}

#[test]
fn wiener_mean_and_variance_match_dense_solve() {
    for dims in [vec![(48, 1.0)], vec![(8, 1.0), (6, 1.0)]] {
        let g = RegularGrid::new(&dims).unwrap();
        let sigma = 0.7;
        let (prob, p) = noisy_problem(&g, 9, sigma);
        let rec = wiener_reconstruct(&prob, &p, &WienerConfig::default()).unwrap();

        let lambda: Vec<f64> = p.spectrum().iter().map(|v| v / g.cell_volume()).collect();
        let phi = circulant_oracle(&g, &lambda);
        let r = selection(prob.response());
        let d_inv = phi.clone().try_inverse().unwrap() + r.transpose() * &r / (sigma * sigma);
        let d = d_inv.try_inverse().unwrap();
        let j = r.transpose() * DVector::from_column_slice(prob.data()) / (sigma * sigma);
        let mean = to_vec(&(&d * j));
        let err: f64 = rec.mean.values().iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err < 1e-7 * norm, "{:e}", err / norm);

        let std: Vec<f64> = d.diagonal().iter().map(|v| v.sqrt()).collect();
        assert!(max_rel(rec.uncertainty.values(), &std) < 1e-8);
        assert!(rec.uncertainty.values().iter().all(|s| *s <= rec.prior_std * (1.0 + 1e-12)));
    }
}

#[test]
fn zero_data_gives_zero_mean() {
    let g = RegularGrid::new(&[(32, 1.0)]).unwrap();
    let resp = random_mask(&g, &mut rng(10), 0.5);
    let n = resp.n_observed();
    let prob = NoisyDataProblem::with_priors(
        vec![0.0; n],
        resp,
        1.0,
        PriorTerms::without_smoothness(),
        DEFAULT_EPSILON,
        DEFAULT_NU,
        4096,
    )
    .unwrap();
    let p = random_params(&g, &mut rng(11));
    let rec = wiener_reconstruct(&prob, &p, &WienerConfig::default()).unwrap();
    assert!(rec.mean.values().iter().all(|v| *v == 0.0));
}

#[test]
fn masked_cells_are_more_uncertain() {
    let g = RegularGrid::new(&[(64, 1.0)]).unwrap();
    let spectrum = vec![1.0; 64];
    let phi = sample_field(&g, &spectrum, 12).unwrap();
    let mask: Vec<bool> = (0..64).map(|i| !(20..40).contains(&i)).collect();
    let resp = MaskResponseOp::from_mask(&g, &mask).unwrap();
    let data = resp.apply(phi.values());
    let prob = NoisyDataProblem::with_priors(
        data,
        resp,
        0.1,
        PriorTerms::without_smoothness(),
        DEFAULT_EPSILON,
        DEFAULT_NU,
        4096,
    )
    .unwrap();
    let p = SpectralParams::new(&g, vec![0.0; 64], vec![0.0; 64], DEFAULT_EPSILON, DEFAULT_NU).unwrap();
    let rec = wiener_reconstruct(&prob, &p, &WienerConfig::default()).unwrap();
    let u = rec.uncertainty.values();
    let seen = (0..64).filter(|&i| mask[i]).map(|i| u[i]).fold(0.0, f64::max);
    let hidden = (0..64).filter(|&i| !mask[i]).map(|i| u[i]).fold(f64::INFINITY, f64::min);
    assert!(hidden > seen, "{hidden} vs {seen}");
}

#[test]
fn accepted_steps_never_increase_the_hamiltonian() {
    let g = RegularGrid::new(&[(64, 1.0)]).unwrap();
    let phi = random_field(&g, &mut rng(13));
    let prob = PerfectDataProblem::new(phi, &HYPER, DEFAULT_EPSILON, FRAC_PI_2).unwrap();
    let res = minimize_map(&prob, &OptimizerConfig::default()).unwrap();
    assert!(res.hamiltonian_trace.len() > 1);
    for w in res.hamiltonian_trace.windows(2) {
        assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
    }
    assert!(res.delta_bar.iter().all(|d| d.abs() <= FRAC_PI_2 - DEFAULT_EPSILON));
}

#[test]
fn marginal_fit_converges_on_a_small_problem() {
    let g = RegularGrid::new(&[(48, 1.0)]).unwrap();
    let (prob, _) = noisy_problem(&g, 14, 0.5);
    let res = minimize_map(&prob, &OptimizerConfig::default()).unwrap();
    assert!(res.converged, "{}", res.message);
    let start = res.hamiltonian_trace[0];
    assert!(res.final_hamiltonian() < start);
}
