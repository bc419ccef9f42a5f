//! Mock data for the three reference experiments and custom setups.
//!
//! Every random draw comes from a ChaCha stream selected by `(seed, purpose)`,
//! so the field, the mask and the noise are reproducible independently.

use std::f64::consts::PI;

use rand::{seq::index, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::convention;
use crate::error::{Error, Result};
use crate::grid::{fft_inverse, k_coords, Axis, Field, HarmonicField, RegularGrid};
use crate::inference::{CurvatureConfig, InferenceHyper, OptimizerConfig, WienerConfig};
use crate::model::{
    sde_to_spectrum, structured_spectrum, SdeSpec, StructuredParams, DEFAULT_EPSILON, OSCILLATOR_PARAMS,
    WAVE2D_PARAMS,
};
use crate::operators::{LinOp, MaskResponseOp, ScaledIdentityOp};
use crate::priors::SmoothnessHyper;

/// RNG stream identifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Field = 1,
    Noise = 2,
    Mask = 3,
}

/// A ChaCha stream keyed by seed and purpose.
pub fn rng_for(seed: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    Oscillator1d,
    Wave2d,
    Structured2d,
    Custom,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::Oscillator1d => "oscillator1d",
            Case::Wave2d => "wave2d",
            Case::Structured2d => "structured2d",
            Case::Custom => "custom",
        }
    }
}

/// Source of the true spectral density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectrumSource {
    Sde(SdeSpec),
    Structured(StructuredParams),
    /// Values per mode in FFT order.
    Explicit { values: Vec<f64> },
}

impl SpectrumSource {
    pub fn evaluate(&self, grid: &RegularGrid) -> Result<Vec<f64>> {
        let kc = k_coords(grid);
        match self {
            SpectrumSource::Sde(s) => sde_to_spectrum(s, &kc),
            SpectrumSource::Structured(p) => structured_spectrum(&kc, p),
            SpectrumSource::Explicit { values } => {
                if values.len() != grid.size() {
                    return Err(Error::DomainMismatch {
                        expected: grid.size(),
                        got: values.len(),
                    });
                }
                Ok(values.clone())
            }
        }
    }
}

/// A box of masked cells given as fractions `[lo, hi)` of every axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskInterval {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Masked boxes, or a random fraction of masked cells.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub intervals: Vec<MaskInterval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub field: u64,
    pub noise: u64,
    pub mask: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            field: 1,
            noise: 2,
            mask: 3,
        }
    }
}

impl Seeds {
    /// Seeds derived from one base value.
    pub fn from_base(base: u64) -> Self {
        Self {
            field: base,
            noise: base.wrapping_add(1),
            mask: base.wrapping_add(2),
        }
    }
}

/// Full description of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub case: Case,
    pub grid: RegularGrid,
    pub spectrum: SpectrumSource,
    /// Standard deviation of the white measurement noise per cell.
    pub noise_sigma: f64,
    #[serde(default)]
    pub mask: MaskSpec,
    #[serde(default)]
    pub seeds: Seeds,
    pub hyper: InferenceHyper,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub curvature: CurvatureConfig,
    #[serde(default)]
    pub wiener: WienerConfig,
}

fn axes(dims: &[(usize, f64)]) -> Vec<Axis> {
    dims.iter()
        .map(|&(n_points, length)| Axis { n_points, length })
        .collect()
}

fn hyper(strength: f64) -> InferenceHyper {
    InferenceHyper {
        smoothness: SmoothnessHyper::new(strength, strength),
        nu: 0.5 * PI,
        epsilon: DEFAULT_EPSILON,
    }
}

fn boxes(b: &[(&[f64], &[f64])]) -> MaskSpec {
    MaskSpec {
        intervals: b
            .iter()
            .map(|(lo, hi)| MaskInterval {
                lo: lo.to_vec(),
                hi: hi.to_vec(),
            })
            .collect(),
        fraction: None,
    }
}

/// Default 1D grid: 1024 cells over a unit time axis.
pub const OSCILLATOR_GRID: (usize, f64) = (1024, 1.0);
/// Default side of the 2D grids.
pub const GRID_2D: (usize, f64) = (128, 1.0);

impl ExperimentConfig {
    /// The reference setup of a case; `Custom` has none.
    pub fn preset(case: Case) -> Result<Self> {
        let late_and_gaps = || {
            boxes(&[
                (&[0.8, 0.0], &[1.0, 1.0]),
                (&[0.25, 0.1], &[0.35, 0.4]),
                (&[0.5, 0.6], &[0.6, 0.85]),
            ])
        };
        let cfg = match case {
            Case::Oscillator1d => {
                let (a, b, m2) = OSCILLATOR_PARAMS;
                Self {
                    case,
                    grid: RegularGrid::try_from(axes(&[OSCILLATOR_GRID]))?,
                    spectrum: SpectrumSource::Sde(SdeSpec::oscillator(a, b, m2)),
                    noise_sigma: 16.0,
                    mask: boxes(&[(&[0.12], &[0.22]), (&[0.45], &[0.57]), (&[0.75], &[0.88])]),
                    seeds: Seeds::default(),
                    hyper: hyper(2.0),
                    optimizer: OptimizerConfig::default(),
                    curvature: CurvatureConfig::default(),
                    wiener: WienerConfig::default(),
                }
            }
            Case::Wave2d => {
                let (a, b, g, r, m2) = WAVE2D_PARAMS;
                Self {
                    case,
                    grid: RegularGrid::try_from(axes(&[GRID_2D, GRID_2D]))?,
                    spectrum: SpectrumSource::Sde(SdeSpec::wave2d(a, b, g, r, m2)),
                    noise_sigma: 7.0,
                    mask: late_and_gaps(),
                    seeds: Seeds::default(),
                    hyper: hyper(2.5),
                    optimizer: OptimizerConfig::default(),
                    curvature: CurvatureConfig::default(),
                    wiener: WienerConfig::default(),
                }
            }
            Case::Structured2d => Self {
                case,
                grid: RegularGrid::try_from(axes(&[GRID_2D, GRID_2D]))?,
                spectrum: SpectrumSource::Structured(StructuredParams::default()),
                noise_sigma: 1.0,
                mask: late_and_gaps(),
                seeds: Seeds::default(),
                hyper: hyper(4.0),
                optimizer: OptimizerConfig::default(),
                curvature: CurvatureConfig::default(),
                wiener: WienerConfig::default(),
            },
            Case::Custom => return Err(Error::Config("the custom case has no preset".into())),
        };
        Ok(cfg)
    }

    /// Parses a TOML config. Keys given for a preset case override the
    /// preset; `grid`, `spectrum` and `mask` replace it as a whole.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let case: Case = match user.get("case") {
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(format!("case: {e}")))?,
            None => return Err(Error::Config("missing key `case`".into())),
        };
        let merged = if case == Case::Custom {
            user
        } else {
            let base = toml::Table::try_from(Self::preset(case)?).map_err(|e| Error::Config(e.to_string()))?;
            merge(base, user)
        };
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if let SpectrumSource::Sde(s) = &self.spectrum {
            s.validate(self.grid.ndim())
                .map_err(|e| Error::Config(format!("sde: {e}")))?;
        }
        self.mask.validate(&self.grid)?;
        self.hyper
            .smoothness
            .validate()
            .map_err(|e| Error::Config(format!("hyper: {e}")))?;
        if !(self.hyper.nu > 0.0 && self.hyper.epsilon > 0.0 && self.hyper.epsilon < 0.5 * PI) {
            return Err(Error::Config("hyper: need nu > 0 and 0 < epsilon < pi/2".into()));
        }
        Ok(())
    }
}

const REPLACED: [&str; 3] = ["grid", "spectrum", "mask"];

fn merge(mut base: toml::Table, user: toml::Table) -> toml::Table {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) if !REPLACED.contains(&k.as_str()) => {
                let inner = std::mem::take(b);
                *b = merge(inner, u);
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

impl MaskSpec {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty() && self.fraction.is_none()
    }

    pub fn validate(&self, grid: &RegularGrid) -> Result<()> {
        if !self.intervals.is_empty() && self.fraction.is_some() {
            return Err(Error::Config("mask: give either intervals or a fraction".into()));
        }
        if let Some(f) = self.fraction {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::Config(format!("mask fraction must lie in [0, 1), got {f}")));
            }
        }
        for iv in &self.intervals {
            if iv.lo.len() != grid.ndim() || iv.hi.len() != grid.ndim() {
                return Err(Error::Config("mask interval needs one bound per axis".into()));
            }
            for (lo, hi) in iv.lo.iter().zip(&iv.hi) {
                if !(0.0 <= *lo && lo <= hi && *hi <= 1.0) {
                    return Err(Error::Config(format!("mask interval [{lo}, {hi}) outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// Draws one real Gaussian field with spectral density `spectrum` (FFT order).
pub fn sample_field(grid: &RegularGrid, spectrum: &[f64], seed: u64) -> Result<Field> {
    if spectrum.len() != grid.size() {
        return Err(Error::DomainMismatch {
            expected: grid.size(),
            got: spectrum.len(),
        });
    }
    if let Some(i) = spectrum.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::NotPositive(format!("spectrum at mode {i} = {}", spectrum[i])));
    }
    let volume = grid.total_volume();
    let mut rng = rng_for(seed, Purpose::Field);
    let mut h = vec![Complex64::new(0.0, 0.0); grid.size()];
    for k in 0..grid.size() {
        let neg = grid.negated(k);
        if neg < k {
            continue;
        }
        let amp = convention::mode_amplitude(spectrum[k], volume);
        if neg == k {
            let a: f64 = rng.sample(StandardNormal);
            h[k] = Complex64::new(amp * a, 0.0);
        } else {
            let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            let z = Complex64::new(a, b) * (amp * std::f64::consts::FRAC_1_SQRT_2);
            h[k] = z;
            h[neg] = z.conj();
        }
    }
    fft_inverse(&HarmonicField::new(grid.clone(), h, true)?)
}

/// Mask response for `spec`; a fraction mask draws exactly `⌊f N⌋` cells.
pub fn make_mask(grid: &RegularGrid, spec: &MaskSpec, seed: u64) -> Result<MaskResponseOp> {
    spec.validate(grid)?;
    let n = grid.size();
    let mut observed = vec![true; n];
    if let Some(f) = spec.fraction {
        let count = (f * n as f64).floor() as usize;
        let mut rng = rng_for(seed, Purpose::Mask);
        for i in index::sample(&mut rng, n, count) {
            observed[i] = false;
        }
    }
    let shape = grid.shape();
    for iv in &spec.intervals {
        for (flat, obs) in observed.iter_mut().enumerate() {
            let idx = grid.unravel(flat);
            let inside = (0..shape.len()).all(|a| {
                let x = idx[a] as f64 / shape[a] as f64;
                iv.lo[a] <= x && x < iv.hi[a]
            });
            if inside {
                *obs = false;
            }
        }
    }
    let r = MaskResponseOp::from_mask(grid, &observed)?;
    if r.n_observed() == 0 {
        return Err(Error::EmptyObservation);
    }
    Ok(r)
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma`.
pub fn add_noise(clean: &[f64], sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(clean.to_vec());
    }
    let mut rng = rng_for(seed, Purpose::Noise);
    Ok(clean
        .iter()
        .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Everything a fit needs, plus the truth.
#[derive(Clone, Debug)]
pub struct ExperimentBundle {
    pub config: ExperimentConfig,
    pub phi: Field,
    pub data: Vec<f64>,
    pub response: MaskResponseOp,
    pub truth_spectrum: Vec<f64>,
}

impl ExperimentBundle {
    pub fn noise(&self) -> ScaledIdentityOp {
        ScaledIdentityOp::new(self.data.len(), self.config.noise_sigma.powi(2))
    }
}

pub fn generate(config: &ExperimentConfig) -> Result<ExperimentBundle> {
    config.validate()?;
    let grid = &config.grid;
    let truth = config.spectrum.evaluate(grid)?;
    let phi = sample_field(grid, &truth, config.seeds.field)?;
    let response = make_mask(grid, &config.mask, config.seeds.mask)?;
    let data = add_noise(&response.apply(phi.values()), config.noise_sigma, config.seeds.noise)?;
    Ok(ExperimentBundle {
        config: config.clone(),
        phi,
        data,
        response,
        truth_spectrum: truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for case in [Case::Oscillator1d, Case::Wave2d, Case::Structured2d] {
            let cfg = ExperimentConfig::preset(case).unwrap();
            cfg.validate().unwrap();
            let text = cfg.to_toml_string().unwrap();
            assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        }
        assert!(ExperimentConfig::preset(Case::Custom).is_err());
    }

    #[test]
    fn overrides_merge_into_preset() {
        let cfg = ExperimentConfig::from_toml_str(
            "case = \"wave2d\"\nnoise_sigma = 3.0\n[hyper]\nsigma = 1.5\n[[grid]]\nn_points = 16\nlength = 1.0\n[[grid]]\nn_points = 8\nlength = 2.0\n",
        )
        .unwrap();
        assert_eq!(cfg.grid.shape(), vec![16, 8]);
        assert_eq!(cfg.noise_sigma, 3.0);
        assert_eq!(cfg.hyper.smoothness.sigma, 1.5);
        assert_eq!(cfg.hyper.smoothness.mu, 2.5);
        assert_eq!(cfg.mask.intervals.len(), 3);
    }

    #[test]
    fn mask_replaced_not_merged() {
        let cfg = ExperimentConfig::from_toml_str("case = \"oscillator1d\"\n[mask]\nfraction = 0.3\n").unwrap();
        assert!(cfg.mask.intervals.is_empty());
        assert_eq!(cfg.mask.fraction, Some(0.3));
    }

    #[test]
    fn bad_configs_rejected() {
        assert!(matches!(ExperimentConfig::from_toml_str("case = \"pendulum\""), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml_str("noise_sigma = 1.0"), Err(Error::Config(_))));
        assert!(ExperimentConfig::from_toml_str("case = \"custom\"").is_err());
        assert!(ExperimentConfig::from_toml_str("case = \"oscillator1d\"\nnoise_sigma = -1.0").is_err());
        assert!(ExperimentConfig::from_toml_str("case = \"oscillator1d\"\n[mask]\nfraction = 1.0").is_err());
    }

    #[test]
    fn preset_oscillator_zero_mode_truth() {
        let b = generate(&ExperimentConfig::preset(Case::Oscillator1d).unwrap()).unwrap();
        assert!((b.truth_spectrum[0] - 4.0).abs() < 1e-12);
        let masked = b.config.grid.size() - b.data.len();
        let frac = masked as f64 / b.config.grid.size() as f64;
        assert!((frac - 0.35).abs() < 0.01, "{frac}");
    }

    #[test]
    fn mask_everything_but_one_cell() {
        let g = RegularGrid::new(&[(8, 1.0)]).unwrap();
        let spec = boxes(&[(&[0.0], &[0.5]), (&[0.625], &[1.0])]);
        let r = make_mask(&g, &spec, 0).unwrap();
        assert_eq!(r.observed(), &[4]);
        let all = boxes(&[(&[0.0], &[1.0])]);
        assert!(matches!(make_mask(&g, &all, 0), Err(Error::EmptyObservation)));
        assert_eq!(make_mask(&g, &MaskSpec::default(), 0).unwrap().n_observed(), 8);
    }
}
