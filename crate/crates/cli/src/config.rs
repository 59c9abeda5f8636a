use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pixelbytes::control::{ControlConfig, DemoConfig};
use pixelbytes::model::SeqModelConfig;
use pixelbytes::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub temperature: f64,
    /// Context rows shown to the model at each step.
    pub window: usize,
    /// Rows of each reference record used as the prompt.
    pub prompt_len: usize,
    /// Tokens generated per sample (capped by what the reference holds).
    pub max_len: usize,
    /// Canvas geometry for raster generation; width 0 means one long row.
    pub height: usize,
    pub width: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            window: 128,
            prompt_len: 32,
            max_len: 64,
            height: 1,
            width: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: SeqModelConfig,
    pub train: TrainConfig,
    pub control: ControlConfig,
    pub demo: DemoConfig,
    pub generate: GenerateConfig,
    /// Share of records held out for validation when no validation corpus is given.
    pub validation_fraction: f64,
    /// Demo plant `dx = a x + b u, y = c x`.
    pub plant: [f64; 3],
    pub repetitions: usize,
    pub sample_rate: u32,
    pub palette: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: SeqModelConfig::default(),
            train: TrainConfig::default(),
            control: ControlConfig::default(),
            demo: DemoConfig::default(),
            generate: GenerateConfig::default(),
            validation_fraction: 0.1,
            plant: [-1.0, 1.0, 1.0],
            repetitions: 100,
            sample_rate: 16_000,
            palette: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
