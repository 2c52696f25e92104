use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::relnet::normalize;

/// Add-α unigram model with one out-of-vocabulary bucket:
/// `P(w) = (count(w) + α) / (N + α(V + 1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramModel {
    counts: HashMap<String, u64>,
    total: u64,
    alpha: f64,
}

impl UnigramModel {
    /// α = 0 gives unsmoothed relative frequencies (unseen words get 0).
    pub fn from_tokens<I, S>(tokens: I, alpha: f64) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("smoothing α must be finite and ≥ 0, got {alpha}")));
        }
        let mut counts = HashMap::new();
        let mut total = 0;
        for t in tokens {
            let w = normalize(t.as_ref());
            if !w.is_empty() {
                *counts.entry(w).or_insert(0) += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::Empty("unigram corpus"));
        }
        Ok(Self { counts, total, alpha })
    }

    pub fn from_text(text: &str, alpha: f64) -> Result<Self> {
        Self::from_tokens(text.split_whitespace(), alpha)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn vocab_size(&self) -> usize {
        self.counts.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(&normalize(word)).copied().unwrap_or(0)
    }

    fn denominator(&self) -> f64 {
        self.total as f64 + self.alpha * (self.counts.len() + 1) as f64
    }

    pub fn prob(&self, word: &str) -> f64 {
        (self.count(word) as f64 + self.alpha) / self.denominator()
    }

    /// Mass of the shared out-of-vocabulary bucket.
    pub fn oov_prob(&self) -> f64 {
        self.alpha / self.denominator()
    }

    pub fn words(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(w, &c)| (w.as_str(), c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_and_smoothing() {
        let lm = UnigramModel::from_text("the cat the", 0.0).unwrap();
        assert!((lm.prob("the") - 2.0 / 3.0).abs() < 1e-15);
        let lm = UnigramModel::from_text("the cat the", 1.0).unwrap();
        assert_eq!(lm.vocab_size(), 2);
        assert!((lm.prob("the") - 0.5).abs() < 1e-15);
        assert!((lm.prob("dog") - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(lm.prob("dog"), lm.oov_prob());
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(UnigramModel::from_text("  \n", 1.0).is_err());
        assert!(UnigramModel::from_text("a", -1.0).is_err());
    }
}
