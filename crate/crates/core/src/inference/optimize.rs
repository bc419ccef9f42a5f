use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{project_gradient, Posterior, SpectralProblem};
use crate::convention::DEFAULT_DENSE_CAP;
use crate::error::Result;
use crate::linalg::Cholesky;
use crate::model::SpectralParams;
use crate::operators::LinOp;

/// Settings of the projected quasi-Newton minimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Projected-gradient ∞-norm at which to stop; `None` means `1e−6·N`.
    pub grad_tol: Option<f64>,
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Stop as stalled after this many iterations with relative decrease below `stall_tol`.
    pub stall_iters: usize,
    pub stall_tol: f64,
    /// Run `τ`-only iterations before the joint minimization.
    pub alternating: bool,
    pub block_iters: usize,
    /// Largest grid for which the preconditioner is factored densely.
    pub dense_cap: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            grad_tol: None,
            memory: 12,
            stall_iters: 25,
            stall_tol: 1e-13,
            alternating: true,
            block_iters: 200,
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub tau_bar: Vec<f64>,
    pub delta_bar: Vec<f64>,
    /// Hamiltonian after every accepted step, starting with the initial value.
    pub hamiltonian_trace: Vec<f64>,
    pub converged: bool,
    /// `√Ô` of the log spectrum, once computed.
    pub uncertainty_log_spectrum: Option<Vec<f64>>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub message: String,
}

impl MapResult {
    pub fn final_hamiltonian(&self) -> f64 {
        *self.hamiltonian_trace.last().unwrap_or(&f64::NAN)
    }

    pub fn log_spectrum(&self) -> Vec<f64> {
        self.tau_bar.iter().zip(&self.delta_bar).map(|(t, d)| t + d.tan()).collect()
    }

    pub fn params(&self, template: &SpectralParams) -> Result<SpectralParams> {
        SpectralParams::new(
            template.grid(),
            self.tau_bar.clone(),
            self.delta_bar.clone(),
            template.epsilon(),
            template.nu(),
        )
    }
}

/// Block-diagonal approximation of the Hessian: `½𝟙` for the likelihood
/// plus the prior precisions.
enum Preconditioner {
    Dense(Cholesky, Cholesky),
    Diagonal(Vec<f64>, Vec<f64>),
}

impl Preconditioner {
    fn new(posterior: &Posterior, nu: f64, cap: usize) -> Result<Self> {
        let n = posterior.grid().size();
        let ridge = 1.0 / (nu * nu);
        let Some((pt, pd)) = posterior.priors().smoothness() else {
            return Ok(Self::Diagonal(vec![0.5; n], vec![0.5 + ridge; n]));
        };
        if n <= cap {
            let mut mt = pt.dense();
            let mut md = pd.dense();
            for i in 0..n {
                mt[(i, i)] += 0.5;
                md[(i, i)] += 0.5 + ridge;
            }
            return Ok(Self::Dense(
                Cholesky::new(&mt, "preconditioner")?,
                Cholesky::new(&md, "preconditioner")?,
            ));
        }
        let diag = |p: &crate::priors::PriorPrecision| -> Vec<f64> {
            let mut d = p.zero_mode().exact_diagonal().unwrap();
            if let Some(s) = p.smoothness().exact_diagonal() {
                d.iter_mut().zip(s).for_each(|(a, b)| *a += b);
            }
            d
        };
        Ok(Self::Diagonal(
            diag(pt).into_iter().map(|v| v + 0.5).collect(),
            diag(pd).into_iter().map(|v| v + 0.5 + ridge).collect(),
        ))
    }

    fn apply(&self, g: &[f64]) -> Vec<f64> {
        let n = g.len() / 2;
        let (gt, gd) = g.split_at(n);
        let (mut a, b) = match self {
            Self::Dense(ct, cd) => (ct.solve(gt), cd.solve(gd)),
            Self::Diagonal(dt, dd) => (
                gt.iter().zip(dt).map(|(x, d)| x / d).collect(),
                gd.iter().zip(dd).map(|(x, d)| x / d).collect::<Vec<f64>>(),
            ),
        };
        a.extend(b);
        a
    }
}

struct State {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

struct Evaluator<'a> {
    posterior: &'a Posterior,
    template: &'a SpectralParams,
    /// Variables allowed to move.
    free: Vec<bool>,
    /// Flat index of `−k` for every mode.
    mirror: Vec<usize>,
}

impl Evaluator<'_> {
    fn params(&self, x: &[f64]) -> Result<SpectralParams> {
        let n = x.len() / 2;
        SpectralParams::new(
            self.template.grid(),
            x[..n].to_vec(),
            x[n..].to_vec(),
            self.template.epsilon(),
            self.template.nu(),
        )
    }

    fn clamp(&self, x: &mut [f64]) {
        let n = x.len() / 2;
        let b = self.template.bound();
        x[n..].iter_mut().for_each(|d| *d = d.clamp(-b, b));
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.posterior.hamiltonian(&self.params(x)?)
    }

    /// Averages every pair `k`, `−k` of both halves of `v`.
    fn symmetrize(&self, v: &mut [f64]) {
        let n = self.mirror.len();
        for half in v.chunks_mut(n) {
            for (k, &m) in self.mirror.iter().enumerate() {
                if m > k {
                    let avg = 0.5 * (half[k] + half[m]);
                    half[k] = avg;
                    half[m] = avg;
                }
            }
        }
    }

    fn eval(&self, x: Vec<f64>) -> Result<State> {
        let p = self.params(&x)?;
        let (f, gt, mut gd) = self.posterior.hamiltonian_and_gradient(&p)?;
        project_gradient(&p, &mut gd);
        let mut g = gt;
        g.extend(gd);
        self.symmetrize(&mut g);
        for (gi, free) in g.iter_mut().zip(&self.free) {
            if !free {
                *gi = 0.0;
            }
        }
        Ok(State { x, f, g })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes the problem's Hamiltonian from its current parameters.
///
/// The parameters of `k` and `−k` are tied: the data of a real field only
/// constrain the symmetric part of the spectrum, and the `δ` prior would
/// otherwise favor one-sided peaks.
pub fn minimize_map(problem: &dyn SpectralProblem, cfg: &OptimizerConfig) -> Result<MapResult> {
    let posterior = problem.posterior();
    let start = problem.params();
    let n = start.tau().len();
    let grad_tol = cfg.grad_tol.unwrap_or(1e-6 * n as f64);
    let pre = Preconditioner::new(posterior, start.nu(), cfg.dense_cap)?;

    let mut x0 = start.tau().to_vec();
    x0.extend_from_slice(start.delta());
    let grid = start.grid();
    let mut ev = Evaluator {
        posterior,
        template: start,
        free: vec![true; 2 * n],
        mirror: (0..n).map(|k| grid.negated(k)).collect(),
    };
    ev.symmetrize(&mut x0);
    let mut state = ev.eval(x0)?;
    let mut trace = vec![state.f];
    let mut iterations = 0;

    if cfg.alternating {
        ev.free = (0..2 * n).map(|i| i < n).collect();
        state = ev.eval(state.x)?;
        let block_cfg = OptimizerConfig {
            max_iters: cfg.block_iters.min(cfg.max_iters),
            ..cfg.clone()
        };
        let (s, _, it, _) = run(&ev, &pre, state, &block_cfg, grad_tol, &mut trace)?;
        iterations += it;
        ev.free = vec![true; 2 * n];
        state = ev.eval(s.x)?;
    }

    let remaining = OptimizerConfig {
        max_iters: cfg.max_iters.saturating_sub(iterations),
        ..cfg.clone()
    };
    let (state, converged, it, message) = run(&ev, &pre, state, &remaining, grad_tol, &mut trace)?;
    iterations += it;
    let gradient_norm = inf_norm(&state.g);
    let (tau_bar, delta_bar) = state.x.split_at(n);
    Ok(MapResult {
        tau_bar: tau_bar.to_vec(),
        delta_bar: delta_bar.to_vec(),
        hamiltonian_trace: trace,
        converged,
        uncertainty_log_spectrum: None,
        iterations,
        gradient_norm,
        message,
    })
}

/// Limits on a single step, keeping `tan δ` and `exp τ` in a sane range.
const MAX_TAU_STEP: f64 = 4.0;
const MAX_DELTA_STEP: f64 = 0.3;

fn run(
    ev: &Evaluator<'_>,
    pre: &Preconditioner,
    mut state: State,
    cfg: &OptimizerConfig,
    grad_tol: f64,
    trace: &mut Vec<f64>,
) -> Result<(State, bool, usize, String)> {
    let n = state.x.len() / 2;
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut stalled = 0;
    let mut iterations = 0;
    loop {
        if inf_norm(&state.g) < grad_tol {
            return Ok((state, true, iterations, "gradient tolerance reached".into()));
        }
        if iterations >= cfg.max_iters {
            return Ok((state, false, iterations, "iteration limit reached".into()));
        }
        iterations += 1;

        let mut accepted = None;
        for attempt in 0..2 {
            if attempt == 1 {
                memory.clear();
            }
            let mut d = direction(pre, &memory, &state.g);
            for (di, free) in d.iter_mut().zip(&ev.free) {
                if !free {
                    *di = 0.0;
                }
            }
            // components held at an active bound stay there
            let b = ev.template.bound();
            for k in 0..n {
                if state.g[n + k] == 0.0 && state.x[n + k].abs() >= b {
                    d[n + k] = 0.0;
                }
            }
            if dot(&d, &state.g) >= 0.0 {
                memory.clear();
                d = pre.apply(&state.g).into_iter().map(|v| -v).collect();
            }
            let scale = (inf_norm(&d[..n]) / MAX_TAU_STEP)
                .max(inf_norm(&d[n..]) / MAX_DELTA_STEP)
                .max(1.0);
            d.iter_mut().for_each(|v| *v /= scale);
            if let Some(x) = line_search(ev, &state, &d) {
                accepted = Some(x);
                break;
            }
        }
        let Some((x_new, f_new, evaluated)) = accepted else {
            return Ok((state, false, iterations, "line search failed after restart".into()));
        };
        let new = match evaluated {
            Some(s) => s,
            None => match ev.eval(x_new) {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("gradient evaluation failed after an accepted step: {e}");
                    return Ok((state, false, iterations, format!("gradient evaluation failed: {e}")));
                }
            },
        };
        debug_assert!((new.f - f_new).abs() <= 1e-9 * f_new.abs().max(1.0));

        let s: Vec<f64> = new.x.iter().zip(&state.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = new.g.iter().zip(&state.g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            memory.push_back((s, y, 1.0 / sy));
            if memory.len() > cfg.memory {
                memory.pop_front();
            }
        }
        let decrease = state.f - new.f;
        if decrease <= cfg.stall_tol * state.f.abs().max(1.0) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        trace.push(new.f);
        state = new;
        if stalled >= cfg.stall_iters {
            return Ok((state, false, iterations, "stalled: no further decrease".into()));
        }
    }
}

/// Two-loop recursion with the block preconditioner as initial inverse Hessian.
fn direction(pre: &Preconditioner, memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, g: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    let mut r = pre.apply(&q);
    for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &r);
        r.iter_mut().zip(s).for_each(|(ri, si)| *ri += (a - b) * si);
    }
    r.into_iter().map(|v| -v).collect()
}

/// Backtracking along the projected path with an Armijo condition and
/// quadratic or cubic step interpolation.
///
/// The full step is evaluated with its gradient, since it is usually accepted.
fn line_search(ev: &Evaluator<'_>, state: &State, d: &[f64]) -> Option<(Vec<f64>, f64, Option<State>)> {
    const C1: f64 = 1e-4;
    let f0 = state.f;
    let slope = dot(&state.g, d);
    let mut alpha = 1.0;
    let mut prev: Option<(f64, f64)> = None;
    for trial in 0..40 {
        let mut x: Vec<f64> = state.x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect();
        ev.clamp(&mut x);
        let moved: Vec<f64> = x.iter().zip(&state.x).map(|(a, b)| a - b).collect();
        if inf_norm(&moved) == 0.0 {
            return None;
        }
        let decrease = dot(&state.g, &moved);
        let (f, full) = if trial == 0 {
            match ev.eval(x.clone()) {
                Ok(s) => (s.f, Some(s)),
                Err(_) => (f64::INFINITY, None),
            }
        } else {
            (ev.value(&x).unwrap_or(f64::INFINITY), None)
        };
        if f.is_finite() && f <= f0 + C1 * decrease && f < f0 {
            return Some((x, f, full));
        }
        let next = if !f.is_finite() {
            0.1 * alpha
        } else {
            match prev {
                None => -slope * alpha * alpha / (2.0 * (f - f0 - slope * alpha)),
                Some((a_prev, f_prev)) => cubic_step(f0, slope, alpha, f, a_prev, f_prev),
            }
        };
        let next = if next.is_finite() {
            next.clamp(0.1 * alpha, 0.5 * alpha)
        } else {
            0.5 * alpha
        };
        if f.is_finite() {
            prev = Some((alpha, f));
        }
        alpha = next;
    }
    None
}

fn cubic_step(f0: f64, slope: f64, a1: f64, f1: f64, a2: f64, f2: f64) -> f64 {
    let r1 = f1 - f0 - slope * a1;
    let r2 = f2 - f0 - slope * a2;
    let denom = a1 - a2;
    let a = (r1 / (a1 * a1) - r2 / (a2 * a2)) / denom;
    let b = (-a2 * r1 / (a1 * a1) + a1 * r2 / (a2 * a2)) / denom;
    if a == 0.0 {
        return -slope / (2.0 * b);
    }
    let disc = b * b - 3.0 * a * slope;
    if disc < 0.0 {
        return 0.5 * a1;
    }
    (-b + disc.sqrt()) / (3.0 * a)
}
