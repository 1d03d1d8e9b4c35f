use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::trainer::TrainConfig;
use crate::diffusion::ScheduleKind;
use crate::error::{bail, Result};
use crate::market::Feature;
use crate::model::{Activation, ConvView, Normalization};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub prices: PathBuf,
    /// Indicators used to build the correlation graph.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fundamentals: Option<PathBuf>,
    /// Precomputed adjacency CSV; takes precedence over `fundamentals`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<PathBuf>,
    pub features: Vec<Feature>,
    pub t_p: usize,
    pub t_h: usize,
    pub window_stride: usize,
    pub chunk_len: usize,
    pub split: [f64; 3],
    pub split_seed: u64,
    pub normalize_shift: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            prices: PathBuf::from("prices.csv"),
            fundamentals: None,
            graph: None,
            features: Feature::defaults(),
            t_p: 20,
            t_h: 10,
            window_stride: 1,
            chunk_len: 60,
            split: [0.90, 0.05, 0.05],
            split_seed: 0,
            normalize_shift: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub f0: usize,
    pub depth: usize,
    pub layers_per_block: usize,
    /// Filter taps per layer; a single entry is reused for every layer.
    pub taps: Vec<usize>,
    pub stride: usize,
    /// Fraction of nodes kept at each level, one entry per block.
    pub keep_ratios: Vec<f64>,
    pub activation: Activation,
    pub normalization: Normalization,
    pub conv_view: ConvView,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            f0: 64,
            depth: 3,
            layers_per_block: 2,
            taps: vec![2],
            stride: 1,
            keep_ratios: vec![1.0, 0.8, 0.8],
            activation: Activation::default(),
            normalization: Normalization::default(),
            conv_view: ConvView::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleName {
    #[default]
    Cosine,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionConfig {
    pub steps: usize,
    pub schedule: ScheduleName,
    /// Only used by the linear schedule.
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            schedule: ScheduleName::Cosine,
            beta_min: 1e-4,
            beta_max: 0.02,
        }
    }
}

impl DiffusionConfig {
    pub fn kind(&self) -> ScheduleKind {
        match self.schedule {
            ScheduleName::Cosine => ScheduleKind::Cosine,
            ScheduleName::Linear => ScheduleKind::Linear {
                beta_min: self.beta_min,
                beta_max: self.beta_max,
            },
        }
    }
}

/// Experiment configuration read from TOML.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub diffusion: DiffusionConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| crate::Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative data paths are taken from its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.prices);
        if let Some(p) = self.data.fundamentals.as_mut() {
            fix(p);
        }
        if let Some(p) = self.data.graph.as_mut() {
            fix(p);
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| crate::Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.t_p == 0 || d.t_h == 0 || d.window_stride == 0 {
            bail!(Config, "t_p, t_h and window_stride must be positive");
        }
        if d.chunk_len < d.t_p + d.t_h {
            bail!(Config, "chunk_len {} is shorter than t_p + t_h = {}", d.chunk_len, d.t_p + d.t_h);
        }
        if d.features.is_empty() {
            bail!(Config, "data.features must not be empty");
        }
        if d.fundamentals.is_none() && d.graph.is_none() {
            bail!(Config, "set data.fundamentals or data.graph");
        }
        let m = &self.model;
        if m.keep_ratios.len() != m.depth {
            bail!(Config, "model.keep_ratios needs {} entries (one per block)", m.depth);
        }
        if m.keep_ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            bail!(Config, "keep ratios must lie in (0, 1]");
        }
        if m.taps.len() != 1 && m.taps.len() != m.layers_per_block {
            bail!(Config, "model.taps needs 1 or layers_per_block entries");
        }
        if self.diffusion.steps < 2 {
            bail!(Config, "diffusion.steps must be at least 2");
        }
        self.train.validate()
    }
}
