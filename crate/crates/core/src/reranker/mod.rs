//! k-best re-ranking: relatedness scorers, a unigram language model and
//! log-linear fusion with the spotting baseline.

pub mod fusion;
pub mod hypothesis;
pub mod scorer;
pub mod unigram;

pub use fusion::{ctx_confidence, fuse_scores, rerank, reranked_set, FusionConfig, RankedCandidate, PROB_FLOOR};
pub use hypothesis::{Candidate, HypothesisSet, MAX_K};
pub use scorer::{cosine_relatedness, Cosine, CosineMode, Scorer};
pub use unigram::UnigramModel;
