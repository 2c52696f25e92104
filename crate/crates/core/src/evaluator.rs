//! Top-1 accuracy (full, dict, list), mean reciprocal rank and the k-best
//! sweep over re-ranked hypothesis lists.

use std::collections::HashSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relnet::normalize;
use crate::reranker::{rerank, FusionConfig, HypothesisSet, Scorer, UnigramModel};

/// Fixed word list for the dict metric.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon(HashSet<String>);

impl Lexicon {
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(words: I) -> Self {
        Self(
            words
                .into_iter()
                .map(|w| normalize(w.as_ref()))
                .filter(|w| !w.is_empty())
                .collect(),
        )
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(&normalize(word))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Words in sorted order.
    pub fn words(&self) -> Vec<&str> {
        let mut w: Vec<&str> = self.0.iter().map(String::as_str).collect();
        w.sort_unstable();
        w
    }
}

/// Outcome for one image after re-ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub image_id: String,
    pub gold: String,
    pub ranked: Vec<String>,
    /// `None` when no lexicon was supplied.
    pub gold_in_lexicon: Option<bool>,
    pub gold_in_list: bool,
}

impl EvalRecord {
    pub fn new(image_id: &str, gold: &str, ranked: Vec<String>, lexicon: Option<&Lexicon>) -> Self {
        let gold = normalize(gold);
        let ranked: Vec<String> = ranked.iter().map(|w| normalize(w)).collect();
        Self {
            image_id: image_id.to_string(),
            gold_in_lexicon: lexicon.map(|l| l.contains(&gold)),
            gold_in_list: ranked.contains(&gold),
            gold,
            ranked,
        }
    }

    /// 1-based rank of the gold word, if present.
    pub fn rank(&self) -> Option<usize> {
        self.ranked.iter().position(|w| *w == self.gold).map(|i| i + 1)
    }

    pub fn correct(&self) -> bool {
        self.rank() == Some(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracyMode {
    Full,
    Dict,
    List,
}

/// A fraction with its counts; `value` is `None` for an empty denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: Option<f64>,
    pub correct: usize,
    pub denominator: usize,
}

impl Ratio {
    fn of(correct: usize, denominator: usize) -> Self {
        Self {
            value: (denominator > 0).then(|| correct as f64 / denominator as f64),
            correct,
            denominator,
        }
    }
}

pub fn accuracy(records: &[EvalRecord], mode: AccuracyMode) -> Result<Ratio> {
    if records.is_empty() {
        return Err(Error::Empty("evaluation records"));
    }
    let include = |r: &EvalRecord| -> Result<bool> {
        Ok(match mode {
            AccuracyMode::Full => true,
            AccuracyMode::List => r.gold_in_list,
            AccuracyMode::Dict => r
                .gold_in_lexicon
                .ok_or_else(|| Error::Config("dict accuracy needs a lexicon".into()))?,
        })
    };
    let (mut correct, mut denom) = (0, 0);
    for r in records {
        if include(r)? {
            denom += 1;
            correct += usize::from(r.correct());
        }
    }
    Ok(Ratio::of(correct, denom))
}

/// Mean reciprocal rank of the gold word; an absent gold counts 0.
pub fn mrr(records: &[EvalRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Empty("evaluation records"));
    }
    let sum: f64 = records.iter().map(|r| r.rank().map_or(0.0, |k| 1.0 / k as f64)).sum();
    Ok(sum / records.len() as f64)
}

/// Metrics of one evaluation (one k).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub k: usize,
    pub full: Ratio,
    pub dict: Option<Ratio>,
    pub list: Ratio,
    pub mrr: f64,
}

pub fn metrics(records: &[EvalRecord], k: usize) -> Result<Metrics> {
    let with_lexicon = records.iter().all(|r| r.gold_in_lexicon.is_some());
    Ok(Metrics {
        k,
        full: accuracy(records, AccuracyMode::Full)?,
        dict: if with_lexicon {
            Some(accuracy(records, AccuracyMode::Dict)?)
        } else {
            None
        },
        list: accuracy(records, AccuracyMode::List)?,
        mrr: mrr(records)?,
    })
}

/// The k giving the highest value of each metric (smallest k on ties).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestK {
    pub full: Option<usize>,
    pub dict: Option<usize>,
    pub list: Option<usize>,
    pub mrr: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: usize,
    pub rows: Vec<Metrics>,
    pub best: BestK,
}

fn argmax(rows: &[Metrics], f: impl Fn(&Metrics) -> Option<f64>) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for r in rows {
        if let Some(v) = f(r) {
            if best.is_none_or(|(b, _)| v > b) {
                best = Some((v, r.k));
            }
        }
    }
    best.map(|(_, k)| k)
}

impl EvalReport {
    pub fn from_rows(records: usize, rows: Vec<Metrics>) -> Self {
        let best = BestK {
            full: argmax(&rows, |m| m.full.value),
            dict: argmax(&rows, |m| m.dict.and_then(|d| d.value)),
            list: argmax(&rows, |m| m.list.value),
            mrr: argmax(&rows, |m| Some(m.mrr)),
        };
        Self { records, rows, best }
    }

    /// Plain-text table with columns full, dict, list, k and MRR, values in
    /// percent; `n/a` marks an undefined metric.
    pub fn render(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.1}", 100.0 * v));
        let mut s = String::new();
        let _ = writeln!(s, "{:>7} {:>7} {:>7} {:>4} {:>7}", "full", "dict", "list", "k", "MRR");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>7} {:>7} {:>7} {:>4} {:>7}",
                pct(r.full.value),
                pct(r.dict.and_then(|d| d.value)),
                pct(r.list.value),
                r.k,
                pct(Some(r.mrr))
            );
        }
        let k = |v: Option<usize>| v.map_or("n/a".to_string(), |k| k.to_string());
        let _ = writeln!(
            s,
            "best k: full {} dict {} list {} MRR {} ({} records)",
            k(self.best.full),
            k(self.best.dict),
            k(self.best.list),
            k(self.best.mrr),
            self.records
        );
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Records for `sets` with their candidate lists taken as already ranked.
pub fn records_as_ranked(sets: &[HypothesisSet], lexicon: Option<&Lexicon>) -> Vec<EvalRecord> {
    sets.iter()
        .map(|h| {
            let ranked = h.candidates.iter().map(|c| c.word.clone()).collect();
            EvalRecord::new(&h.image_id, &h.gold, ranked, lexicon)
        })
        .collect()
}

/// Re-ranks every set truncated to its top `k` baseline candidates.
pub fn rerank_records(
    sets: &[HypothesisSet],
    k: usize,
    scorer: &Scorer<'_>,
    lm: Option<&UnigramModel>,
    cfg: &FusionConfig,
    lexicon: Option<&Lexicon>,
) -> Result<Vec<EvalRecord>> {
    sets.iter()
        .map(|h| {
            let ranked = rerank(&h.truncated(k), scorer, lm, cfg)?;
            let words = ranked.into_iter().map(|c| c.word).collect();
            Ok(EvalRecord::new(&h.image_id, &h.gold, words, lexicon))
        })
        .collect()
}

/// Evaluates k = 1…`k_max`, truncating each list to its top-k baseline
/// candidates before re-ranking.
pub fn k_sweep(
    sets: &[HypothesisSet],
    scorer: &Scorer<'_>,
    lm: Option<&UnigramModel>,
    cfg: &FusionConfig,
    lexicon: Option<&Lexicon>,
    k_max: usize,
) -> Result<EvalReport> {
    if k_max < 1 {
        return Err(Error::Config("k_max must be at least 1".into()));
    }
    if sets.is_empty() {
        return Err(Error::Empty("hypothesis sets"));
    }
    let rows = (1..=k_max)
        .map(|k| metrics(&rerank_records(sets, k, scorer, lm, cfg, lexicon)?, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_rows(sets.len(), rows))
}
