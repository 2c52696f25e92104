//! Line-oriented text formats. Every data file starts with a `#<kind> v1`
//! header; other lines starting with `#` and blank lines are ignored.
//! Fields are tab-separated.
//!
//! ```text
//! #hypotheses v1
//! image_id  gold  word₁  score₁  …  word_k  score_k
//!
//! #context v1
//! image_id  label:conf;label:conf  label:conf  caption words
//!
//! #pairs v1
//! image_id  candidate  target
//!
//! #trace v1
//! image_id  rank  word  baseline  relatedness  context  unigram  fused
//! ```
//!
//! Embedding files use the common pretrained-vector layout (a word and its
//! values per line, space-separated, with an optional `count dim` first
//! line). Lexicons hold one word per line; unigram corpora are plain text.

mod formats;
mod text;

pub use formats::{
    attach_contexts, load_context, load_hypotheses, load_pairs, load_traces, write_context, write_hypotheses,
    write_pairs, write_traces, ContextMap, TraceRow,
};
pub use text::{load_embeddings, load_lexicon, load_unigram, write_embeddings, write_lexicon};
