use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::seed::fnv1a;

/// Lowercased, trimmed form used for every lookup and comparison.
pub fn normalize(word: &str) -> String {
    word.trim().to_lowercase()
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(normalize).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Label {
    pub label: String,
    pub confidence: f64,
}

impl Label {
    pub fn new(label: &str, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Config(format!(
                "confidence of `{label}` must lie in [0, 1], got {confidence}"
            )));
        }
        let label = normalize(label);
        if label.is_empty() {
            return Err(Error::Empty("context label"));
        }
        Ok(Self { label, confidence })
    }

    pub fn tokens(&self) -> Vec<String> {
        tokenize(&self.label)
    }
}

/// Visual context of one image: object labels, place labels and a caption.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContextBundle {
    pub objects: Vec<Label>,
    pub places: Vec<Label>,
    pub caption: Vec<String>,
}

impl ContextBundle {
    pub fn new(objects: Vec<Label>, places: Vec<Label>, caption: &str) -> Self {
        Self {
            objects,
            places,
            caption: tokenize(caption),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty() && self.places.is_empty() && self.caption.is_empty()
    }

    /// Context sequence: object tokens, then place tokens, then caption tokens.
    pub fn sequence(&self) -> Vec<String> {
        self.objects
            .iter()
            .chain(&self.places)
            .flat_map(Label::tokens)
            .chain(self.caption.iter().cloned())
            .collect()
    }

    /// Object and place tokens only (the word-level view).
    pub fn label_tokens(&self) -> Vec<String> {
        self.objects.iter().chain(&self.places).flat_map(Label::tokens).collect()
    }

    fn sources(&self) -> [BTreeSet<String>; 3] {
        let labels = |ls: &[Label]| ls.iter().flat_map(Label::tokens).collect::<BTreeSet<_>>();
        [
            labels(&self.objects),
            labels(&self.places),
            self.caption.iter().cloned().collect(),
        ]
    }

    /// Highest confidence among labels containing `word`, if any.
    pub fn matched_confidence(&self, word: &str) -> Option<f64> {
        let w = normalize(word);
        self.objects
            .iter()
            .chain(&self.places)
            .filter(|l| l.tokens().contains(&w))
            .map(|l| l.confidence)
            .reduce(f64::max)
    }

    pub fn max_confidence(&self) -> Option<f64> {
        self.objects
            .iter()
            .chain(&self.places)
            .map(|l| l.confidence)
            .reduce(f64::max)
    }
}

/// Term counts across the three context sources, plus whether the candidate
/// itself shows up in the context.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapVector {
    /// number of sources (objects, places, caption) each term appears in
    pub counts: BTreeMap<String, u32>,
    pub indicator: bool,
    pub candidate_count: u32,
    /// `counts` folded into hashed buckets
    pub buckets: Vec<f64>,
}

impl OverlapVector {
    /// Fixed-width feature row: the buckets, then the indicator, then the
    /// candidate's own count.
    pub fn features(&self) -> Vec<f64> {
        let mut f = self.buckets.clone();
        f.push(if self.indicator { 1.0 } else { 0.0 });
        f.push(f64::from(self.candidate_count));
        f
    }

    pub fn width(buckets: usize) -> usize {
        buckets + 2
    }
}

pub fn bucket_of(term: &str, buckets: usize) -> usize {
    (fnv1a(term.as_bytes()) % buckets as u64) as usize
}

pub fn overlap_features(candidate: &str, ctx: &ContextBundle, buckets: usize) -> OverlapVector {
    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    for source in ctx.sources() {
        for term in source {
            *counts.entry(term).or_default() += 1;
        }
    }
    let cand = tokenize(candidate);
    let candidate_count = cand.iter().filter_map(|t| counts.get(t)).copied().max().unwrap_or(0);
    let buckets = buckets.max(1);
    let mut hashed = vec![0.0; buckets];
    for (term, &c) in &counts {
        hashed[bucket_of(term, buckets)] += f64::from(c);
    }
    OverlapVector {
        indicator: candidate_count > 0,
        candidate_count,
        counts,
        buckets: hashed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn airport() -> ContextBundle {
        ContextBundle::new(
            vec![Label::new("airliner", 0.9).unwrap()],
            vec![Label::new("runway", 0.8).unwrap()],
            "a plane on the runway",
        )
    }

    #[test]
    fn counts_terms_across_sources() {
        let o = overlap_features("delta", &airport(), 1024);
        assert_eq!(o.counts["runway"], 2);
        assert_eq!(o.counts["airliner"], 1);
        assert_eq!(o.counts["plane"], 1);
        assert!(!o.indicator);
        assert_eq!(o.buckets.iter().sum::<f64>(), o.counts.values().sum::<u32>() as f64);
    }

    #[test]
    fn empty_context_is_all_zero() {
        let o = overlap_features("runway", &ContextBundle::default(), 1024);
        assert!(o.features().iter().all(|&v| v == 0.0));
        assert_eq!(o.features().len(), OverlapVector::width(1024));
    }

    #[test]
    fn candidate_in_context_sets_indicator() {
        let o = overlap_features("Runway", &airport(), 1024);
        assert!(o.indicator);
        assert_eq!(o.candidate_count, 2);
    }

    #[test]
    fn sequence_order_is_objects_places_caption() {
        assert_eq!(
            airport().sequence(),
            ["airliner", "runway", "a", "plane", "on", "the", "runway"]
        );
        assert_eq!(airport().label_tokens(), ["airliner", "runway"]);
    }

    #[test]
    fn label_validation() {
        assert!(Label::new("x", 1.5).is_err());
        assert!(Label::new("  ", 0.5).is_err());
        assert_eq!(Label::new(" Bus ", 0.5).unwrap().label, "bus");
        assert_eq!(airport().matched_confidence("RUNWAY"), Some(0.8));
        assert_eq!(airport().matched_confidence("delta"), None);
    }
}
