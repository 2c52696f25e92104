use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::relnet::{normalize, ContextBundle};
use crate::tensor::PROB_FLOOR;

/// A candidate word, its visual context and the relatedness target.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub candidate: String,
    pub ctx: ContextBundle,
    pub target: f64,
}

impl TrainingPair {
    pub fn new(candidate: &str, ctx: ContextBundle, target: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&target) {
            return Err(Error::Config(format!("target {target} outside [0, 1]")));
        }
        Ok(Self {
            candidate: normalize(candidate),
            ctx,
            target,
        })
    }
}

/// Attempts per negative before falling back to enumerating the eligible
/// words.
const REJECTION_TRIES: usize = 64;

/// One positive pair per corpus item and `neg_ratio` negatives, each the
/// gold word of another item that is neither this item's gold nor one of
/// its context terms.
pub fn make_pairs(corpus: &[(String, ContextBundle)], neg_ratio: usize, rng: &mut impl Rng) -> Result<Vec<TrainingPair>> {
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    if neg_ratio < 1 {
        return Err(Error::Config("neg_ratio must be at least 1".into()));
    }
    let golds: Vec<String> = corpus.iter().map(|(w, _)| normalize(w)).collect();
    let mut out = Vec::with_capacity(corpus.len() * (1 + neg_ratio));
    for (i, (_, ctx)) in corpus.iter().enumerate() {
        let gold = &golds[i];
        if gold.is_empty() {
            return Err(Error::Empty("gold word"));
        }
        let own: HashSet<String> = ctx.sequence().into_iter().collect();
        let eligible = |w: &String| w != gold && !own.contains(w);
        out.push(TrainingPair::new(gold, ctx.clone(), 1.0)?);
        let mut pool: Option<Vec<&String>> = None;
        for _ in 0..neg_ratio {
            let tried = (0..REJECTION_TRIES)
                .map(|_| &golds[rng.random_range(0..golds.len())])
                .find(|w| eligible(w));
            let word = match tried {
                Some(w) => w,
                None => {
                    let pool = pool.get_or_insert_with(|| golds.iter().filter(|w| eligible(w)).collect());
                    *pool.choose(rng).ok_or_else(|| {
                        Error::Sampling(format!("no gold word other than `{gold}` lies outside its own context"))
                    })?
                }
            };
            out.push(TrainingPair::new(word, ctx.clone(), 0.0)?);
        }
    }
    Ok(out)
}

/// `−[t·ln p + (1−t)·ln(1−p)]` with `p` clamped to `[1e-7, 1 − 1e-7]`.
pub fn bce_loss(pred: f64, target: f64) -> f64 {
    let p = pred.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relnet::Label;
    use crate::seed::rng_for;

    fn corpus(n: usize) -> Vec<(String, ContextBundle)> {
        (0..n)
            .map(|i| {
                let ctx = ContextBundle::new(vec![Label::new(&format!("obj{i}"), 0.9).unwrap()], vec![], "a sign");
                (format!("word{i}"), ctx)
            })
            .collect()
    }

    #[test]
    fn counts_and_targets() {
        let pairs = make_pairs(&corpus(100), 1, &mut rng_for(1, "pairs")).unwrap();
        assert_eq!(pairs.len(), 200);
        assert_eq!(pairs.iter().filter(|p| p.target == 1.0).count(), 100);
        let pairs = make_pairs(&corpus(10), 3, &mut rng_for(1, "pairs")).unwrap();
        assert_eq!(pairs.len(), 40);
    }

    #[test]
    fn negatives_avoid_own_gold_and_context() {
        let mut c = corpus(5);
        // item 0 mentions word1 in its caption, so word1 is never its negative
        c[0].1 = ContextBundle::new(vec![], vec![], "word1 here");
        let pairs = make_pairs(&c, 20, &mut rng_for(2, "pairs")).unwrap();
        for chunk in pairs.chunks(21) {
            let gold = &chunk[0].candidate;
            for neg in &chunk[1..] {
                assert_ne!(&neg.candidate, gold);
                assert!(!chunk[0].ctx.sequence().contains(&neg.candidate));
            }
        }
    }

    #[test]
    fn same_seed_same_pairs() {
        let a = make_pairs(&corpus(30), 2, &mut rng_for(3, "pairs")).unwrap();
        let b = make_pairs(&corpus(30), 2, &mut rng_for(3, "pairs")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_distinct_word_cannot_give_negatives() {
        let mut c = corpus(3);
        for item in &mut c {
            item.0 = "same".into();
        }
        let r = make_pairs(&c, 1, &mut rng_for(0, "pairs"));
        assert!(matches!(r, Err(Error::Sampling(_))));
        assert!(make_pairs(&[], 1, &mut rng_for(0, "pairs")).is_err());
        assert!(make_pairs(&corpus(3), 0, &mut rng_for(0, "pairs")).is_err());
    }

    #[test]
    fn bce_values() {
        assert!((bce_loss(0.5, 1.0) - 2f64.ln()).abs() < 1e-12);
        assert!((bce_loss(0.9, 1.0) + 0.9f64.ln()).abs() < 1e-12);
        assert!(bce_loss(1.0, 1.0) < 1e-6);
        assert!(bce_loss(0.0, 0.0) >= 0.0);
    }
}
