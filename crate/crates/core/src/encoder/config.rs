use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which vector feeds the aspect-sentiment pair head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApInput {
    /// Final state of `[CLS]`.
    #[default]
    SentVector,
    /// Concatenated final states of the pair's aspect and sentiment tokens.
    PairVector,
}

impl ApInput {
    pub fn parse(s: &str) -> Option<ApInput> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "sent" | "sent_vector" | "cls" => Some(ApInput::SentVector),
            "pair" | "pair_vector" => Some(ApInput::PairVector),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ApInput::SentVector => "sent_vector",
            ApInput::PairVector => "pair_vector",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub n_layers: usize,
    pub hidden_dim: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    pub vocab_size: usize,
    pub dropout_rate: f64,
    pub init_std: f64,
    /// Share the token embedding matrix with the SW output projection.
    pub tie_output: bool,
    pub ap_input: ApInput,
}

impl EncoderConfig {
    /// Desk-scale defaults: 2 layers, 64 hidden units, 2 heads.
    pub fn toy(vocab_size: usize) -> Self {
        EncoderConfig {
            n_layers: 2,
            hidden_dim: 64,
            n_heads: 2,
            ffn_dim: 256,
            max_seq_len: 128,
            vocab_size,
            dropout_rate: 0.1,
            init_std: 0.02,
            tie_output: false,
            ap_input: ApInput::SentVector,
        }
    }

    /// Base-sized shape (12 layers, 768 hidden). Far too slow to train here.
    pub fn base(vocab_size: usize) -> Self {
        EncoderConfig {
            n_layers: 12,
            hidden_dim: 768,
            n_heads: 12,
            ffn_dim: 3072,
            max_seq_len: 512,
            ..Self::toy(vocab_size)
        }
    }

    /// Large-sized shape (24 layers, 1024 hidden).
    pub fn large(vocab_size: usize) -> Self {
        EncoderConfig {
            n_layers: 24,
            hidden_dim: 1024,
            n_heads: 16,
            ffn_dim: 4096,
            max_seq_len: 512,
            ..Self::toy(vocab_size)
        }
    }

    pub fn preset(name: &str, vocab_size: usize) -> Option<Self> {
        match name {
            "toy" => Some(Self::toy(vocab_size)),
            "base" => Some(Self::base(vocab_size)),
            "large" => Some(Self::large(vocab_size)),
            _ => None,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.n_heads
    }

    /// Width of the vector fed to the AP head.
    pub fn ap_dim(&self) -> usize {
        match self.ap_input {
            ApInput::SentVector => self.hidden_dim,
            ApInput::PairVector => 2 * self.hidden_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_heads == 0 || self.hidden_dim == 0 || self.hidden_dim % self.n_heads != 0 {
            return bad(format!(
                "hidden_dim {} must be a positive multiple of n_heads {}",
                self.hidden_dim, self.n_heads
            ));
        }
        if self.ffn_dim == 0 || self.max_seq_len < 2 {
            return bad("ffn_dim must be positive and max_seq_len at least 2".into());
        }
        if self.vocab_size <= crate::corpus::NUM_SPECIAL {
            return bad(format!(
                "vocab_size {} leaves no room for corpus tokens",
                self.vocab_size
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return bad(format!("init_std {} must be positive", self.init_std));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in ["toy", "base", "large"] {
            EncoderConfig::preset(name, 100).unwrap().validate().unwrap();
        }
        assert!(EncoderConfig::preset("huge", 100).is_none());
    }

    #[test]
    fn heads_must_divide_hidden() {
        let cfg = EncoderConfig {
            n_heads: 3,
            ..EncoderConfig::toy(100)
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
