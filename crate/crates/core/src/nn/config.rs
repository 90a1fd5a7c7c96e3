//! Encoder architecture description.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// How a flat input row becomes a token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    /// Row is split into `tokens - 1` contiguous chunks of `token_dim` values.
    Tokens { token_dim: usize },
    /// Row is a square image, cut into non-overlapping `patch` x `patch`
    /// patches; `tokens - 1` must be a perfect square (the patch grid).
    Patches { patch: usize },
}

/// Transformer encoder shape. `tokens` counts the class token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub depth: usize,
    pub dim: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
    pub tokens: usize,
    pub input: InputMode,
    pub seed: u64,
}

impl EncoderConfig {
    /// Desk-scale default: 4 blocks, width 64, 4 heads, 4x MLP, a 4x4
    /// patch grid of 16 tokens plus the class token.
    pub fn desk_default() -> EncoderConfig {
        EncoderConfig {
            depth: 4,
            dim: 64,
            heads: 4,
            mlp_ratio: 4.0,
            tokens: 17,
            input: InputMode::Patches { patch: 4 },
            seed: 1993,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return Err(CoreError::Config(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            )));
        }
        if self.tokens < 1 {
            return Err(CoreError::Config("tokens must be >= 1".into()));
        }
        if self.tokens < 2 {
            return Err(CoreError::Config(
                "tokens must be >= 2 (class token plus at least one content token)".into(),
            ));
        }
        if !(self.mlp_ratio > 0.0) {
            return Err(CoreError::Config("mlp_ratio must be > 0".into()));
        }
        match self.input {
            InputMode::Tokens { token_dim } => {
                if token_dim == 0 {
                    return Err(CoreError::Config("token_dim must be > 0".into()));
                }
            }
            InputMode::Patches { patch } => {
                if patch == 0 {
                    return Err(CoreError::Config("patch must be > 0".into()));
                }
                let grid2 = self.tokens - 1;
                let grid = (grid2 as f64).sqrt().round() as usize;
                if grid * grid != grid2 {
                    return Err(CoreError::Config(format!(
                        "tokens - 1 = {grid2} is not a square patch grid"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Content tokens (sequence length without the class token).
    pub fn content_tokens(&self) -> usize {
        self.tokens - 1
    }

    /// Per-token input width fed to the embedding.
    pub fn token_input_dim(&self) -> usize {
        match self.input {
            InputMode::Tokens { token_dim } => token_dim,
            InputMode::Patches { patch } => patch * patch,
        }
    }

    /// Expected length of one flat input row.
    pub fn input_len(&self) -> usize {
        self.content_tokens() * self.token_input_dim()
    }

    /// MLP hidden width.
    pub fn mlp_dim(&self) -> usize {
        ((self.dim as f64) * self.mlp_ratio).round() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_default_is_valid() {
        let cfg = EncoderConfig::desk_default();
        cfg.validate().unwrap();
        assert_eq!(cfg.input_len(), 256); // 16x16 image
        assert_eq!(cfg.mlp_dim(), 256);
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut cfg = EncoderConfig::desk_default();
        cfg.heads = 3;
        assert!(cfg.validate().is_err());

        let mut cfg = EncoderConfig::desk_default();
        cfg.tokens = 16; // 15 content tokens: not a square grid
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn token_mode_lengths() {
        let cfg = EncoderConfig {
            depth: 2,
            dim: 16,
            heads: 2,
            mlp_ratio: 2.0,
            tokens: 5,
            input: InputMode::Tokens { token_dim: 3 },
            seed: 1,
        };
        cfg.validate().unwrap();
        assert_eq!(cfg.input_len(), 12);
    }
}
