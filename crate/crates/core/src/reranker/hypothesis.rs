use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relnet::{normalize, ContextBundle};

/// Largest k-best list accepted.
pub const MAX_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub word: String,
    /// Softmax score of the spotting system, in [0, 1].
    pub baseline: f64,
}

impl Candidate {
    pub fn new(word: &str, baseline: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&baseline) {
            return Err(Error::Config(format!(
                "baseline score of `{word}` must lie in [0, 1], got {baseline}"
            )));
        }
        let word = normalize(word);
        if word.is_empty() {
            return Err(Error::Empty("candidate word"));
        }
        Ok(Self { word, baseline })
    }
}

/// The k-best list of one image with its gold word and visual context.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    pub image_id: String,
    pub gold: String,
    /// Sorted by baseline score, highest first; ties by word.
    pub candidates: Vec<Candidate>,
    pub ctx: ContextBundle,
}

impl HypothesisSet {
    pub fn new(image_id: &str, gold: &str, mut candidates: Vec<Candidate>, ctx: ContextBundle) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Empty("candidate list"));
        }
        if candidates.len() > MAX_K {
            return Err(Error::Config(format!(
                "{image_id}: {} candidates, at most {MAX_K} are supported",
                candidates.len()
            )));
        }
        candidates.sort_by(|a, b| b.baseline.total_cmp(&a.baseline).then_with(|| a.word.cmp(&b.word)));
        Ok(Self {
            image_id: image_id.to_string(),
            gold: normalize(gold),
            candidates,
            ctx,
        })
    }

    pub fn k(&self) -> usize {
        self.candidates.len()
    }

    /// The same set cut to its top `k` baseline candidates.
    pub fn truncated(&self, k: usize) -> Self {
        let mut out = self.clone();
        out.candidates.truncate(k.max(1));
        out
    }

    pub fn gold_rank(&self) -> Option<usize> {
        self.candidates.iter().position(|c| c.word == self.gold).map(|i| i + 1)
    }
}
