use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// FDCLSTM (final LSTM state) or FDCLSTM_AT (attention pooling, BN after
/// every convolution).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "fdclstm")]
    Plain,
    #[serde(rename = "fdclstm-at")]
    Attention,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Plain => "fdclstm",
            Variant::Attention => "fdclstm-at",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "fdclstm" => Ok(Variant::Plain),
            "fdclstm-at" => Ok(Variant::Attention),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

pub const KERNEL_WIDTHS: [usize; 4] = [3, 3, 5, 8];
pub const BN_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// widths of the four channels in each context subnetwork
    pub kernel_widths: [usize; 4],
    pub kernels_per_channel: usize,
    pub embedding_dim: usize,
    pub lstm_hidden: usize,
    pub mlp_sizes: Vec<usize>,
    pub dropout: f64,
    pub bn_after_conv: bool,
    /// token slots of the candidate channel
    pub max_candidate_len: usize,
    /// token slots of the context sequence (objects, places, caption)
    pub max_context_len: usize,
    /// window width of the candidate channel
    pub candidate_width: usize,
    pub overlap_buckets: usize,
    pub overlap_width: usize,
    /// variance floor of every batch norm in the network
    pub bn_epsilon: f64,
}

impl ModelConfig {
    pub fn new(variant: Variant, embedding_dim: usize) -> Self {
        Self {
            variant,
            kernel_widths: KERNEL_WIDTHS,
            kernels_per_channel: 64,
            embedding_dim,
            lstm_hidden: 64,
            mlp_sizes: vec![128, 64],
            dropout: 0.7,
            bn_after_conv: variant == Variant::Attention,
            max_candidate_len: 4,
            max_context_len: 32,
            candidate_width: 1,
            overlap_buckets: 1024,
            overlap_width: 16,
            bn_epsilon: BN_EPSILON,
        }
    }

    /// Small dimensions for gradient checks: d = 8, H = 8, j = 4, 12 context slots.
    pub fn toy(variant: Variant) -> Self {
        Self {
            kernels_per_channel: 4,
            lstm_hidden: 8,
            mlp_sizes: vec![8],
            max_candidate_len: 2,
            max_context_len: 12,
            overlap_buckets: 16,
            overlap_width: 4,
            ..Self::new(variant, 8)
        }
    }

    /// Desk-scale dimensions for short synthetic contexts: j = 32, H = 32,
    /// MLP 64-32, 12 context slots, 64 overlap buckets.
    pub fn compact(variant: Variant, embedding_dim: usize) -> Self {
        Self {
            kernels_per_channel: 32,
            lstm_hidden: 32,
            mlp_sizes: vec![64, 32],
            max_context_len: 12,
            overlap_buckets: 64,
            overlap_width: 8,
            ..Self::new(variant, embedding_dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.kernel_widths.contains(&0) {
            return bad("kernel widths must be positive".into());
        }
        let widest = *self.kernel_widths.iter().max().expect("four widths");
        if self.max_context_len < widest {
            return bad(format!(
                "max_context_len {} is shorter than the widest kernel {widest}",
                self.max_context_len
            ));
        }
        if self.candidate_width == 0 || self.max_candidate_len < self.candidate_width {
            return bad("candidate channel width must fit in max_candidate_len".into());
        }
        if self.bn_after_conv != (self.variant == Variant::Attention) {
            return bad(format!(
                "bn_after_conv must be {} for {}",
                self.variant == Variant::Attention,
                self.variant
            ));
        }
        if !(self.bn_epsilon > 0.0 && self.bn_epsilon.is_finite()) {
            return bad(format!("bn_epsilon must be positive, got {}", self.bn_epsilon));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::DropoutRate(self.dropout));
        }
        for (name, v) in [
            ("kernels_per_channel", self.kernels_per_channel),
            ("embedding_dim", self.embedding_dim),
            ("lstm_hidden", self.lstm_hidden),
            ("overlap_buckets", self.overlap_buckets),
            ("overlap_width", self.overlap_width),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.mlp_sizes.is_empty() || self.mlp_sizes.contains(&0) {
            return bad("mlp_sizes must be a non-empty list of positive widths".into());
        }
        Ok(())
    }

    /// Width of the flattened output of one context subnetwork-A channel.
    pub fn channel_span(&self, width: usize) -> usize {
        (self.max_context_len - width + 1) * self.kernels_per_channel
    }

    /// Width of the merged feature row fed to the MLP stack.
    pub fn merge_width(&self) -> usize {
        let a: usize = self.kernel_widths.iter().map(|&k| self.channel_span(k)).sum();
        let cand = (self.max_candidate_len - self.candidate_width + 1) * self.kernels_per_channel;
        a + self.lstm_hidden + cand + self.overlap_width
    }
}
