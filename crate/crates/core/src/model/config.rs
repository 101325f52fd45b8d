use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters. Defaults follow the reference setup:
/// 2 layers, 4 heads, hidden 256, latent 2048, modality lengths 60.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_word: usize,
    pub d_event: usize,
    pub hidden: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn_inner: usize,
    pub latent: usize,
    pub dropout: f64,
    pub l_sem: usize,
    pub l_seq: usize,
    pub n_classes: usize,
    /// Token table size including the reserved ids; set from the vocabulary.
    pub vocab_size: usize,
    pub seed: u64,
    /// Queries from the own modality, keys and contexts from the other.
    /// When false each encoder attends to itself.
    pub impressed_attention: bool,
    pub adaptation_layer: bool,
    /// Attention pooling before the latent projection; mean pooling when false.
    pub balancing_layer: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_word: 300,
            d_event: 384,
            hidden: 256,
            heads: 4,
            layers: 2,
            ffn_inner: 1024,
            latent: 2048,
            dropout: 0.1,
            l_sem: 60,
            l_seq: 60,
            n_classes: 2,
            vocab_size: 0,
            seed: 0,
            impressed_attention: true,
            adaptation_layer: true,
            balancing_layer: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_word", self.d_word),
            ("d_event", self.d_event),
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("layers", self.layers),
            ("ffn_inner", self.ffn_inner),
            ("latent", self.latent),
            ("l_sem", self.l_sem),
            ("l_seq", self.l_seq),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("model.{name} must be >= 1")));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "model.hidden ({}) must be divisible by model.heads ({})",
                self.hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("model.dropout must lie in [0, 1)"));
        }
        if self.n_classes != 2 && self.n_classes != 4 {
            return Err(Error::config("model.n_classes must be 2 or 4"));
        }
        if self.vocab_size < 3 {
            return Err(Error::config("model.vocab_size must cover PAD, UNK and one token"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    /// Human-readable list of fields that differ from `other`.
    pub fn diff(&self, other: &ModelConfig) -> Vec<String> {
        let a = serde_json::to_value(self).expect("config serializes");
        let b = serde_json::to_value(other).expect("config serializes");
        let (a, b) = (a.as_object().unwrap(), b.as_object().unwrap());
        a.iter()
            .filter(|(k, v)| b.get(*k) != Some(v))
            .map(|(k, v)| format!("{k}: {v} vs {}", b[k]))
            .collect()
    }
}
