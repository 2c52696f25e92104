//! Neural building blocks: embeddings, windowed and masked convolution,
//! LSTM, attention pooling, batch normalization, dropout and dense layers.
//!
//! Parameters live in a [`ParamStore`]; layer structs only hold
//! [`ParamId`] handles. A forward pass binds the store to a
//! [`Graph`](crate::tensor::Graph) and threads the resulting [`Bound`]
//! through the layer functions.

pub mod attention;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod embedding;
pub mod lstm;
pub mod norm;
pub mod params;

pub use attention::{attention_pool, attention_pool_batch, AttentionParams, Pooled};
pub use conv::{conv_channel, masked_conv, window_mask, ConvChannel};
pub use dense::{dense, Activation, Dense};
pub use dropout::dropout;
pub use embedding::{EmbeddingTable, SentenceMatrix, Vocabulary, UNK};
pub use lstm::{lstm_batch, lstm_forward, LstmParams};
pub use norm::{batch_norm, BatchNormParams, BatchStats};
pub use params::{Bound, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}
