//! The subcommands as library functions.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde_json::json;
use specfield::grid::{k_coords, Field, RegularGrid};
use specfield::inference::{
    curvature_uncertainty, minimize_map, wiener_reconstruct, NoisyDataProblem, PerfectDataProblem, PriorTerms,
    SpectralProblem, UNDERESTIMATION_NOTE,
};
use specfield::io::{fmt_f64, read_binary, read_field, write_binary, write_field, Layout};
use specfield::model::SpectralParams;
use specfield::operators::{LinOp, MaskResponseOp};
use specfield::priors::DiffBackend;
use specfield::synth::{generate, ExperimentBundle, ExperimentConfig, Seeds};

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

pub const CONFIG_FILE: &str = "config.toml";
pub const PHI_FILE: &str = "phi.f64";
pub const DATA_FILE: &str = "data.f64";
pub const MASK_FILE: &str = "mask.f64";
pub const TRUTH_FILE: &str = "truth_spectrum.f64";
pub const TAU_FILE: &str = "tau.f64";
pub const DELTA_FILE: &str = "delta.f64";
pub const LOG_SPECTRUM_FILE: &str = "log_spectrum.f64";
pub const SIGMA_FILE: &str = "sigma_log_spectrum.f64";
pub const TRACE_FILE: &str = "trace.csv";
pub const MEAN_FILE: &str = "mean.f64";
pub const UNCERTAINTY_FILE: &str = "uncertainty.f64";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitMode {
    Perfect,
    Marginal,
}

impl FitMode {
    pub fn name(self) -> &'static str {
        match self {
            FitMode::Perfect => "perfect",
            FitMode::Marginal => "marginal",
        }
    }
}

/// Settings shared by `fit` and `reconstruct` that override the config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub backend: Option<DiffBackend>,
    pub dense_cap: Option<usize>,
    pub probes: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(b) = self.backend {
            cfg.hyper.smoothness.backend = b;
        }
        if let Some(c) = self.dense_cap {
            cfg.optimizer.dense_cap = c;
            cfg.curvature.dense_cap = c;
            cfg.wiener.dense_cap = c;
        }
        if let Some(p) = self.probes {
            cfg.curvature.probes = p;
            cfg.wiener.probes = p;
        }
    }
}

pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(ExperimentConfig::from_toml_str(&text)?)
}

fn with_sidecar(name: &str) -> [String; 2] {
    [name.to_string(), Path::new(name).with_extension("json").display().to_string()]
}

fn config_value(cfg: &ExperimentConfig) -> CliResult<serde_json::Value> {
    Ok(serde_json::to_value(cfg)?)
}

fn require_dir(dir: &Path, what: &str) -> CliResult<()> {
    if dir.join(CONFIG_FILE).is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{} is not a {what} directory", dir.display())))
    }
}

/// Generates a bundle: the field, the data, the mask and the true spectrum.
pub fn synth(config: &Path, out: &Path, seed_override: Option<u64>) -> CliResult<RunManifest> {
    let start = Instant::now();
    let mut cfg = load_config(config)?;
    if let Some(s) = seed_override {
        cfg.seeds = Seeds::from_base(s);
    }
    let bundle = generate(&cfg)?;
    let elapsed = start.elapsed().as_secs_f64();

    fs::create_dir_all(out)?;
    let grid = &cfg.grid;
    fs::write(out.join(CONFIG_FILE), cfg.to_toml_string()?)?;
    write_field(&out.join(PHI_FILE), &bundle.phi)?;
    write_binary(&out.join(DATA_FILE), grid, &bundle.response.adjoint_apply(&bundle.data), Layout::Cells)?;
    let mask: Vec<f64> = bundle.response.mask().iter().map(|&o| if o { 1.0 } else { 0.0 }).collect();
    write_binary(&out.join(MASK_FILE), grid, &mask, Layout::Cells)?;
    write_binary(&out.join(TRUTH_FILE), grid, &bundle.truth_spectrum, Layout::Modes)?;

    let mut m = RunManifest::new("synth", config_value(&cfg)?, serde_json::to_value(cfg.seeds)?);
    m.add_input("config", config)?;
    m.timings.insert("generate".into(), elapsed);
    m.notes.push("data.f64 holds the noisy data on observed cells and 0 elsewhere; mask.f64 is 1 on observed cells".into());
    let mut names = vec![CONFIG_FILE.to_string()];
    for f in [PHI_FILE, DATA_FILE, MASK_FILE, TRUTH_FILE] {
        names.extend(with_sidecar(f));
    }
    m.finish(out, &names)
}

/// Reads a bundle written by [`synth`].
pub fn load_bundle(dir: &Path) -> CliResult<ExperimentBundle> {
    require_dir(dir, "bundle")?;
    let config = load_config(&dir.join(CONFIG_FILE))?;
    let grid = &config.grid;
    let phi = read_field(&dir.join(PHI_FILE))?;
    let mask = read_field(&dir.join(MASK_FILE))?;
    let data_cells = read_field(&dir.join(DATA_FILE))?;
    let (_, truth_spectrum) = read_binary(&dir.join(TRUTH_FILE))?;
    for f in [&phi, &mask, &data_cells] {
        if f.grid() != grid {
            return Err(specfield::Error::GridMismatch.into());
        }
    }
    let observed: Vec<bool> = mask.values().iter().map(|&v| v > 0.5).collect();
    let response = MaskResponseOp::from_mask(grid, &observed)?;
    let data = response.apply(data_cells.values());
    Ok(ExperimentBundle {
        config,
        phi,
        data,
        response,
        truth_spectrum,
    })
}

fn write_modes(dir: &Path, name: &str, grid: &RegularGrid, values: &[f64]) -> CliResult<()> {
    write_binary(&dir.join(name), grid, values, Layout::Modes)?;
    Ok(())
}

/// MAP spectrum and its Laplace uncertainty.
pub fn fit(
    bundle_dir: &Path,
    mode: FitMode,
    out: &Path,
    config: Option<&Path>,
    overrides: &Overrides,
) -> CliResult<RunManifest> {
    let t_load = Instant::now();
    let bundle = load_bundle(bundle_dir)?;
    let mut cfg = bundle.config.clone();
    if let Some(p) = config {
        let user = load_config(p)?;
        if user.grid != cfg.grid {
            return Err(CliError::Usage("fit config grid differs from the bundle grid".into()));
        }
        cfg.hyper = user.hyper;
        cfg.optimizer = user.optimizer;
        cfg.curvature = user.curvature;
        cfg.wiener = user.wiener;
    }
    overrides.apply(&mut cfg);
    let (eps, nu) = (cfg.hyper.epsilon, cfg.hyper.nu);
    let problem: Box<dyn SpectralProblem> = match mode {
        FitMode::Perfect => Box::new(PerfectDataProblem::new(bundle.phi.clone(), &cfg.hyper.smoothness, eps, nu)?),
        FitMode::Marginal => Box::new(NoisyDataProblem::with_priors(
            bundle.data.clone(),
            bundle.response.clone(),
            cfg.noise_sigma,
            PriorTerms::new(&cfg.grid, &cfg.hyper.smoothness)?,
            eps,
            nu,
            cfg.optimizer.dense_cap,
        )?),
    };
    let load_secs = t_load.elapsed().as_secs_f64();

    let t_fit = Instant::now();
    let result = minimize_map(problem.as_ref(), &cfg.optimizer)?;
    let fit_secs = t_fit.elapsed().as_secs_f64();
    if !result.converged {
        log::warn!("MAP minimization did not converge: {}", result.message);
    }
    let t_curv = Instant::now();
    let unc = curvature_uncertainty(&result, problem.as_ref(), &cfg.curvature)?;
    let curv_secs = t_curv.elapsed().as_secs_f64();

    fs::create_dir_all(out)?;
    let grid = &cfg.grid;
    fs::write(out.join(CONFIG_FILE), cfg.to_toml_string()?)?;
    write_modes(out, TAU_FILE, grid, &result.tau_bar)?;
    write_modes(out, DELTA_FILE, grid, &result.delta_bar)?;
    write_modes(out, LOG_SPECTRUM_FILE, grid, &result.log_spectrum())?;
    write_modes(out, SIGMA_FILE, grid, &unc.sigma_log_spectrum)?;
    let mut trace = String::from("iteration,hamiltonian\n");
    for (i, h) in result.hamiltonian_trace.iter().enumerate() {
        trace.push_str(&format!("{i},{}\n", fmt_f64(*h)));
    }
    fs::write(out.join(TRACE_FILE), trace)?;

    let mut m = RunManifest::new("fit", config_value(&cfg)?, serde_json::to_value(cfg.seeds)?);
    m.add_input("bundle_config", &bundle_dir.join(CONFIG_FILE))?;
    m.add_input(
        "observations",
        &bundle_dir.join(if mode == FitMode::Perfect { PHI_FILE } else { DATA_FILE }),
    )?;
    m.timings.insert("load".into(), load_secs);
    m.timings.insert("fit".into(), fit_secs);
    m.timings.insert("curvature".into(), curv_secs);
    m.convergence = Some(json!({
        "mode": mode.name(),
        "converged": result.converged,
        "iterations": result.iterations,
        "final_hamiltonian": result.final_hamiltonian(),
        "gradient_norm": result.gradient_norm,
        "grad_tol": cfg.optimizer.grad_tol.unwrap_or(1e-6 * grid.size() as f64),
        "message": result.message,
        "curvature_fallback": unc.fallback_used,
        "curvature_probed": unc.probed,
    }));
    m.notes.push(UNDERESTIMATION_NOTE.into());
    let mut names = vec![CONFIG_FILE.to_string()];
    for f in [TAU_FILE, DELTA_FILE, LOG_SPECTRUM_FILE, SIGMA_FILE] {
        names.extend(with_sidecar(f));
    }
    names.push(TRACE_FILE.into());
    m.finish(out, &names)
}

/// Parameters stored by [`fit`], with the config they were fitted under.
pub fn load_fit(dir: &Path) -> CliResult<(ExperimentConfig, SpectralParams)> {
    require_dir(dir, "fit")?;
    let cfg = load_config(&dir.join(CONFIG_FILE))?;
    let (_, tau) = read_binary(&dir.join(TAU_FILE))?;
    let (_, delta) = read_binary(&dir.join(DELTA_FILE))?;
    let params = SpectralParams::new(&cfg.grid, tau, delta, cfg.hyper.epsilon, cfg.hyper.nu)?;
    Ok((cfg, params))
}

/// Wiener reconstruction of the bundle data at the fitted spectrum.
pub fn reconstruct(bundle_dir: &Path, fit_dir: &Path, out: &Path, overrides: &Overrides) -> CliResult<RunManifest> {
    let bundle = load_bundle(bundle_dir)?;
    let (mut cfg, params) = load_fit(fit_dir)?;
    if cfg.grid != bundle.config.grid {
        return Err(specfield::Error::GridMismatch.into());
    }
    overrides.apply(&mut cfg);
    let problem = NoisyDataProblem::with_priors(
        bundle.data.clone(),
        bundle.response.clone(),
        bundle.config.noise_sigma,
        PriorTerms::without_smoothness(),
        cfg.hyper.epsilon,
        cfg.hyper.nu,
        cfg.wiener.dense_cap,
    )?;
    let t = Instant::now();
    let rec = wiener_reconstruct(&problem, &params, &cfg.wiener)?;
    let secs = t.elapsed().as_secs_f64();

    fs::create_dir_all(out)?;
    write_field(&out.join(MEAN_FILE), &rec.mean)?;
    write_field(&out.join(UNCERTAINTY_FILE), &rec.uncertainty)?;

    let mut m = RunManifest::new("reconstruct", config_value(&cfg)?, serde_json::to_value(bundle.config.seeds)?);
    m.add_input("bundle_config", &bundle_dir.join(CONFIG_FILE))?;
    m.add_input("tau", &fit_dir.join(TAU_FILE))?;
    m.add_input("delta", &fit_dir.join(DELTA_FILE))?;
    m.timings.insert("wiener".into(), secs);
    m.convergence = Some(json!({
        "cg_iterations": rec.cg_iterations,
        "cg_residual": rec.cg_residual,
        "cg_rel_tolerance": cfg.wiener.rel_tolerance,
        "variance_probed": rec.probed,
        "prior_std": rec.prior_std,
    }));
    m.notes.push(rec.note);
    let mut names = Vec::new();
    for f in [MEAN_FILE, UNCERTAINTY_FILE] {
        names.extend(with_sidecar(f));
    }
    m.finish(out, &names)
}

/// CSV of a cell field at a fixed index of one axis, with the remaining
/// axes as columns. A 1D field is returned whole.
pub fn slice(field: &Field, axis: usize, index: usize) -> CliResult<String> {
    let grid = field.grid();
    if axis >= grid.ndim() {
        return Err(CliError::Usage(format!("axis {axis} out of range for a {}-d field", grid.ndim())));
    }
    let n = grid.axes()[axis].n_points;
    if index >= n {
        return Err(CliError::Usage(format!("index {index} out of range 0..{n}")));
    }
    let free: Vec<usize> = if grid.ndim() == 1 {
        vec![0]
    } else {
        (0..grid.ndim()).filter(|&a| a != axis).collect()
    };
    let mut header: Vec<String> = free.iter().map(|a| format!("i{a}")).collect();
    header.extend(free.iter().map(|a| format!("x{a}")));
    header.push("value".into());
    let mut out = header.join(",") + "\n";
    for (flat, v) in field.values().iter().enumerate() {
        let idx = grid.unravel(flat);
        if grid.ndim() > 1 && idx[axis] != index {
            continue;
        }
        let mut row: Vec<String> = free.iter().map(|&a| idx[a].to_string()).collect();
        row.extend(free.iter().map(|&a| fmt_f64(grid.cell_coordinate(a, idx[a]))));
        row.push(fmt_f64(*v));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn slice_file(path: &Path, axis: usize, index: usize) -> CliResult<String> {
    slice(&read_field(path)?, axis, index)
}

/// CSV of a mode file in ascending signed-index order, with the harmonic
/// coordinates of every mode.
pub fn spectrum_dump(path: &Path) -> CliResult<String> {
    let (side, values) = read_binary(path)?;
    if side.layout != Layout::Modes {
        return Err(CliError::Usage(format!("{} does not hold mode values", path.display())));
    }
    let grid = side.grid()?;
    let kc = k_coords(&grid);
    let nd = grid.ndim();
    let signed = |flat: usize| -> Vec<i64> {
        grid.unravel(flat)
            .iter()
            .enumerate()
            .map(|(a, &i)| grid.signed_index(a, i))
            .collect()
    };
    let mut order: Vec<usize> = (0..grid.size()).collect();
    order.sort_by_key(|&f| signed(f));
    let mut header: Vec<String> = (0..nd).map(|a| format!("m{a}")).collect();
    header.extend((0..nd).map(|a| format!("k{a}")));
    header.push("value".into());
    let mut out = header.join(",") + "\n";
    for flat in order {
        let mut row: Vec<String> = signed(flat).iter().map(|m| m.to_string()).collect();
        row.extend(kc.k(flat).iter().map(|k| fmt_f64(*k)));
        row.push(fmt_f64(values[flat]));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}
