use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model dimensions. Defaults are the full-size configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Width of word, sub-instruction, RGB and depth features.
    pub feature_dim: usize,
    /// Width of every recurrent state and of the fused features.
    pub hidden_dim: usize,
    pub heads: usize,
    pub action_embed_dim: usize,
    /// Fraction of feature entries zeroed during training.
    pub dropout: f64,
    pub action_count: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feature_dim: 256,
            hidden_dim: 512,
            heads: 8,
            action_embed_dim: 32,
            dropout: 0.25,
            action_count: 4,
        }
    }
}

impl ModelConfig {
    /// Small dimensions for gradient checks and fast tests.
    pub fn tiny() -> Self {
        Self {
            feature_dim: 6,
            hidden_dim: 8,
            heads: 2,
            action_embed_dim: 3,
            dropout: 0.25,
            action_count: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("feature_dim", self.feature_dim),
            ("hidden_dim", self.hidden_dim),
            ("heads", self.heads),
            ("action_embed_dim", self.action_embed_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be at least 1")));
        }
        if !self.hidden_dim.is_multiple_of(self.heads) {
            return Err(Error::invalid(format!(
                "hidden_dim {} is not divisible by {} heads",
                self.hidden_dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.action_count != 4 {
            return Err(Error::invalid("the action set has exactly 4 actions"));
        }
        Ok(())
    }

    /// Input width of the two memory units: pooled RGB, pooled depth and the
    /// previous-action embedding.
    pub fn memory_input_dim(&self) -> usize {
        2 * self.feature_dim + self.action_embed_dim
    }

    /// Input width of the action decoder.
    pub fn decoder_input_dim(&self) -> usize {
        4 * self.hidden_dim + self.action_embed_dim
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        let cfg: ModelConfig =
            serde_json::from_str(&text).map_err(|source| Error::Parse { line: 1, source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Validation(format!("config encode: {e}")))?;
        fs::write(path.as_ref(), text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_full_size() {
        let c = ModelConfig::default();
        assert_eq!((c.feature_dim, c.hidden_dim, c.heads), (256, 512, 8));
        assert_eq!(c.memory_input_dim(), 544);
        assert_eq!(c.decoder_input_dim(), 2080);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_heads = ModelConfig { heads: 3, ..ModelConfig::default() };
        assert!(bad_heads.validate().is_err());
        let zero = ModelConfig { feature_dim: 0, ..ModelConfig::default() };
        assert!(zero.validate().is_err());
        assert!(serde_json::from_str::<ModelConfig>(r#"{"bogus": 1}"#).is_err());
        let partial: ModelConfig = serde_json::from_str(r#"{"hidden_dim": 16, "heads": 4}"#).unwrap();
        assert_eq!(partial.feature_dim, 256);
    }
}
