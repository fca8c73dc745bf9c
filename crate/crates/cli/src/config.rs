//! Run configuration: a single TOML file with a documented schema. Every
//! numeric field is validated against the library preconditions before any
//! compute starts, and field specs are limited to the three documented kinds.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use qmaxent_core::{FieldSample, PenalizedSolveOptions, SpectralGrid};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub constraints: ConstraintsConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub lab: LabConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            constraints: ConstraintsConfig::default(),
            solver: SolverConfig::default(),
            lab: LabConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Mode cutoff K; the basis has 2K+1 plane waves.
    pub k: usize,
    /// Collocation count; defaults to the smallest 5-smooth integer >= 3(2K+1).
    #[serde(default)]
    pub n: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { k: 8, n: None }
    }
}

/// Periodic field specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FieldSpec {
    /// Constant value.
    Constant { value: f64 },
    /// `mean + sum_j amplitudes[j] * cos(2 pi (j+1) x)`.
    Cosine { mean: f64, amplitudes: Vec<f64> },
    /// One sample per line; resampled spectrally if the count differs from
    /// the grid (resampling is logged to stderr).
    Samples { path: String },
}

impl FieldSpec {
    pub fn build(&self, grid: &SpectralGrid) -> Result<FieldSample> {
        match self {
            FieldSpec::Constant { value } => Ok(FieldSample::constant(grid, *value)),
            FieldSpec::Cosine { mean, amplitudes } => {
                Ok(FieldSample::cosine_series(grid, *mean, amplitudes))
            }
            FieldSpec::Samples { path } => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading samples from {path}"))?;
                let samples: Vec<f64> = text
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(|l| l.parse::<f64>().with_context(|| format!("parsing sample {l:?}")))
                    .collect::<Result<_>>()?;
                if samples.is_empty() {
                    bail!("sample file {path} is empty");
                }
                if samples.len() == grid.n_points() {
                    return Ok(FieldSample::from_real_samples(grid, &samples)?);
                }
                eprintln!(
                    "note: resampling {path} spectrally from {} to {} nodes",
                    samples.len(),
                    grid.n_points()
                );
                Ok(resample(grid, &samples))
            }
        }
    }
}

/// Trigonometric interpolation from a uniform grid of arbitrary length onto
/// the collocation nodes.
fn resample(grid: &SpectralGrid, samples: &[f64]) -> FieldSample {
    use std::f64::consts::PI;
    let m = samples.len();
    let half = m / 2;
    let mut values = vec![0.0f64; grid.n_points()];
    for q in -(half as i64)..=(half as i64) {
        if q == -(half as i64) && m % 2 == 0 {
            continue; // unpaired bin of an even-length input
        }
        let mut coeff_re = 0.0;
        let mut coeff_im = 0.0;
        for (j, &s) in samples.iter().enumerate() {
            let phase = -2.0 * PI * q as f64 * j as f64 / m as f64;
            coeff_re += s * phase.cos();
            coeff_im += s * phase.sin();
        }
        coeff_re /= m as f64;
        coeff_im /= m as f64;
        for (j, v) in values.iter_mut().enumerate() {
            let x = grid.nodes()[j];
            let phase = 2.0 * PI * q as f64 * x;
            *v += coeff_re * phase.cos() - coeff_im * phase.sin();
        }
    }
    FieldSample::from_real_samples(grid, &values).expect("length matches")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsConfig {
    pub n0: FieldSpec,
    pub u0: FieldSpec,
    pub target: TargetConfig,
}

impl Default for ConstraintsConfig {
    fn default() -> Self {
        Self {
            n0: FieldSpec::Cosine {
                mean: 1.0,
                amplitudes: vec![0.3],
            },
            u0: FieldSpec::Constant { value: 0.0 },
            target: TargetConfig {
                temperature: Some(1.0),
                energy: None,
            },
        }
    }
}

/// Either a temperature or a global energy target (exactly one).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub energy: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub epsilon_ladder: Vec<f64>,
    pub damping: f64,
    pub max_iters: usize,
    pub tol_fixed_point: f64,
    pub tol_constraint: f64,
    pub newton: bool,
    pub precondition: bool,
    /// Absolute tolerance on |E(T0) - e0| for energy matching.
    pub tol_energy: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = PenalizedSolveOptions::default();
        Self {
            epsilon_ladder: d.epsilon_ladder,
            damping: d.damping,
            max_iters: d.max_iters,
            tol_fixed_point: d.tol_fixed_point,
            tol_constraint: d.tol_constraint,
            newton: d.newton,
            precondition: d.precondition,
            tol_energy: qmaxent_core::tolerances::DEFAULT_TOL_ENERGY,
        }
    }
}

impl SolverConfig {
    pub fn to_options(&self) -> PenalizedSolveOptions {
        PenalizedSolveOptions {
            epsilon_ladder: self.epsilon_ladder.clone(),
            damping: self.damping,
            max_iters: self.max_iters,
            tol_fixed_point: self.tol_fixed_point,
            tol_constraint: self.tol_constraint,
            newton: self.newton,
            precondition: self.precondition,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            t_min: 1.0,
            t_max: 4.0,
            points: 25,
            trials: 400,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: "out".to_string(),
            format: OutputFormat::Csv,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text).context("parsing config")?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = 2 * self.grid.k + 1;
        if let Some(n) = self.grid.n {
            if n < 2 * dim {
                bail!(
                    "grid.n = {n} violates the dealiasing minimum 2*(2K+1) = {} for k = {}",
                    2 * dim,
                    self.grid.k
                );
            }
        }
        match (
            self.constraints.target.temperature,
            self.constraints.target.energy,
        ) {
            (Some(t), None) if t > 0.0 => {}
            (None, Some(_)) => {}
            (Some(t), None) => bail!("target temperature must be positive, got {t}"),
            (Some(_), Some(_)) => bail!("set exactly one of target.temperature / target.energy"),
            (None, None) => bail!("constraints.target needs temperature or energy"),
        }
        let s = &self.solver;
        if s.epsilon_ladder.is_empty()
            || s.epsilon_ladder.iter().any(|&e| e <= 0.0)
            || s.epsilon_ladder.windows(2).any(|w| w[0] <= w[1])
        {
            bail!("solver.epsilon_ladder must be positive and strictly decreasing");
        }
        if !(s.damping > 0.0 && s.damping <= 1.0) {
            bail!("solver.damping must lie in (0, 1], got {}", s.damping);
        }
        if s.tol_fixed_point <= 0.0 || s.tol_constraint <= 0.0 || s.tol_energy <= 0.0 {
            bail!("solver tolerances must be positive");
        }
        let l = &self.lab;
        if !(l.t_min > 0.0 && l.t_max > l.t_min) {
            bail!("lab temperature range must satisfy 0 < t_min < t_max");
        }
        if l.points < 3 {
            bail!("lab.points must be at least 3");
        }
        if l.trials == 0 {
            bail!("lab.trials must be at least 1");
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Arc<SpectralGrid>> {
        let grid = match self.grid.n {
            Some(n) => SpectralGrid::new(self.grid.k, n)?,
            None => SpectralGrid::with_default_nodes(self.grid.k),
        };
        Ok(Arc::new(grid))
    }
}
