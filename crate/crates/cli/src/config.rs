//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use rmllt::parametrix::{ContinuousSeriesConfig, DiscreteSeriesConfig};
use rmllt::{CutoffRule, Error, InnovationLaw, InnovationSpec, ModelSpec, Result, StepFamily, StepSchedule};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// `m(θ) = c θ`.
    Linear { c: f64, sigma: f64, theta0: f64 },
    /// `m(θ) = θ + eps sin θ`.
    SinePerturbed { eps: f64, sigma: f64, theta0: f64 },
    /// `m(θ) = sin θ`.
    Sine { sigma: f64, theta0: f64 },
}

impl ModelConfig {
    pub fn build(&self) -> ModelSpec {
        match *self {
            ModelConfig::Linear { c, sigma, theta0 } => ModelSpec::linear(c, sigma, theta0),
            ModelConfig::SinePerturbed { eps, sigma, theta0 } => ModelSpec::sine_perturbed(eps, sigma, theta0),
            ModelConfig::Sine { sigma, theta0 } => ModelSpec::sine(sigma, theta0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Compact {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

impl Compact {
    pub fn nodes(&self) -> Vec<f64> {
        rmllt::estimate::linspace(self.lo, self.hi, self.nodes)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathCounts {
    /// Paths per N for `simulate` and `couple`.
    pub coupling: usize,
    /// Paths per starting point for KDE-based densities.
    pub density: usize,
    /// Euler-Maruyama substeps per grid step for the cut-off diffusion.
    pub substeps_per_step: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametrixConfig {
    pub r_max: usize,
    /// Starting points of the series.
    pub x: Vec<f64>,
    /// `(x, y)` of the flowchart report.
    pub probe: [f64; 2],
    /// Series order for `q_N` in `rate`, where truncation must stay below the measured gap.
    #[serde(default = "default_rate_r_max")]
    pub rate_r_max: usize,
}

fn default_rate_r_max() -> usize {
    6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub model: ModelConfig,
    pub innovations: InnovationLaw,
    pub steps: StepFamily,
    /// Ascending shifts N.
    pub n_list: Vec<u64>,
    pub cutoff: CutoffRule,
    /// Horizon `T`.
    pub horizon: f64,
    /// Evaluation stops at `T − delta`.
    pub delta: f64,
    pub k_x: Compact,
    pub k_y: Compact,
    pub paths: PathCounts,
    pub seed: u64,
    pub out: PathBuf,
    pub parametrix: ParametrixConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.schema_version != SCHEMA_VERSION {
            return bad(&format!("schema_version {} unsupported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return bad("n_list must be non-empty and strictly ascending");
        }
        if !(self.horizon > 0.0) || !(self.delta > 0.0 && self.delta < self.horizon) {
            return bad("need 0 < delta < horizon");
        }
        for (name, k) in [("k_x", &self.k_x), ("k_y", &self.k_y)] {
            if !(k.lo < k.hi) || k.nodes < 2 {
                return bad(&format!("{name} must have lo < hi and at least 2 nodes"));
            }
        }
        if self.paths.coupling < 100 || self.paths.density < 100 || self.paths.substeps_per_step == 0 {
            return bad("path counts must be at least 100 and substeps_per_step positive");
        }
        if self.parametrix.x.is_empty() {
            return bad("parametrix.x must list at least one starting point");
        }
        self.model.build().check()
    }

    pub fn schedule(&self, n: u64) -> StepSchedule {
        StepSchedule::new(self.steps, n, self.horizon)
    }

    pub fn innovation_spec(&self) -> InnovationSpec {
        InnovationSpec::new(self.innovations)
    }

    pub fn series_config(&self) -> ContinuousSeriesConfig {
        ContinuousSeriesConfig { r_max: self.parametrix.r_max, ..Default::default() }
    }

    pub fn rate_series_config(&self) -> ContinuousSeriesConfig {
        ContinuousSeriesConfig { r_max: self.parametrix.rate_r_max, ..Default::default() }
    }

    pub fn discrete_config(&self) -> DiscreteSeriesConfig {
        DiscreteSeriesConfig { r_max: self.parametrix.r_max, ..Default::default() }
    }
}
