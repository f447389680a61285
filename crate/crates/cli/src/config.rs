//! TOML run configuration. Command-line flags override file values and the
//! resolved result is stored in each run's manifest.

use std::path::Path;

use anyhow::{Context, Result};
use crisis_core::baselines::BaselineParams;
use crisis_core::corpus::SynthSpec;
use crisis_core::encoder::EncoderConfig;
use crisis_core::train::{SearchSpace, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 4 layers, hidden 128: trainable from scratch on a CPU.
    #[default]
    Desk,
    /// DistilBERT dimensions (6 layers, hidden 768).
    Distilbert,
}

/// Encoder shape; unset fields come from the preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSettings {
    pub preset: Preset,
    pub num_layers: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub num_heads: Option<usize>,
    pub ffn_dim: Option<usize>,
    pub dropout_rate: Option<f64>,
    /// Token sequence length including `[CLS]`.
    pub max_len: usize,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        Self {
            preset: Preset::Desk,
            num_layers: None,
            hidden_dim: None,
            num_heads: None,
            ffn_dim: None,
            dropout_rate: None,
            max_len: 64,
        }
    }
}

impl EncoderSettings {
    pub fn resolve(&self, vocab_size: usize, seed: u64) -> crisis_core::Result<EncoderConfig> {
        let mut c = match self.preset {
            Preset::Desk => EncoderConfig::desk(vocab_size),
            Preset::Distilbert => EncoderConfig::distilbert_shape(vocab_size),
        };
        c.num_layers = self.num_layers.unwrap_or(c.num_layers);
        c.hidden_dim = self.hidden_dim.unwrap_or(c.hidden_dim);
        c.num_heads = self.num_heads.unwrap_or(c.num_heads);
        c.ffn_dim = self.ffn_dim.unwrap_or(c.ffn_dim);
        c.dropout_rate = self.dropout_rate.unwrap_or(c.dropout_rate);
        c.max_positions = self.max_len;
        c.seed = seed;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub train: u32,
    pub val: u32,
    pub test: u32,
    pub stratified: bool,
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self {
            train: 90,
            val: 5,
            test: 5,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub vocab_size: usize,
    pub train: TrainConfig,
    pub encoder: EncoderSettings,
    pub baseline: BaselineParams,
    pub search: SearchSpace,
    pub split: SplitSettings,
    pub synth: SynthSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            vocab_size: 8000,
            train: TrainConfig::default(),
            encoder: EncoderSettings::default(),
            baseline: BaselineParams::default(),
            search: SearchSpace::default(),
            split: SplitSettings::default(),
            synth: SynthSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| crisis_core::Error::Config(e.to_string()).into())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// File config if given, defaults otherwise.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c = RunConfig::parse("seed = 9\n[train]\nlearning_rate = 0.001\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.train.learning_rate, 1e-3);
        assert_eq!(c.train.batch_size, 32);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(RunConfig::parse("sed = 9\n").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn preset_overrides() {
        let s = EncoderSettings {
            num_layers: Some(2),
            ..Default::default()
        };
        let c = s.resolve(100, 3).unwrap();
        assert_eq!((c.num_layers, c.hidden_dim, c.max_positions, c.seed), (2, 128, 64, 3));
    }
}
