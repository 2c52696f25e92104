//! Planted-signal corpus: images belong to topics, the gold word of an image
//! is a topic word, and its context is drawn from the same topic. Embedding
//! vectors cluster by topic, so relatedness is learnable by construction.
//!
//! Test sets place the gold at a uniform baseline rank in 1..=4 among words
//! of other topics and misspellings of the gold.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::evaluator::Lexicon;
use crate::layers::EmbeddingTable;
use crate::relnet::{ContextBundle, Label};
use crate::reranker::{Candidate, HypothesisSet};
use crate::seed::{rng_for, SeededRng};
use crate::trainer::TrainingPair;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub topics: usize,
    pub golds_per_topic: usize,
    pub objects_per_topic: usize,
    pub places_per_topic: usize,
    pub caption_words_per_topic: usize,
    /// Training images; one positive and one negative pair each.
    pub train_items: usize,
    /// Leading training images forming the small overfit corpus.
    pub overfit_items: usize,
    pub test_sets: usize,
    pub k: usize,
    pub dim: usize,
    pub unigram_tokens: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            topics: 10,
            golds_per_topic: 6,
            objects_per_topic: 5,
            places_per_topic: 3,
            caption_words_per_topic: 6,
            train_items: 800,
            overfit_items: 100,
            test_sets: 500,
            k: 5,
            dim: 16,
            unigram_tokens: 20_000,
        }
    }
}

const FILLER: [&str; 8] = ["a", "the", "on", "of", "with", "near", "in", "some"];
const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "re", "su", "ta", "no", "vi", "de", "ra", "po", "li", "ne", "go", "fu", "be", "zo", "ha", "ki",
    "mu", "sa", "te", "wo", "ye",
];

struct Topic {
    golds: Vec<String>,
    objects: Vec<String>,
    places: Vec<String>,
    caption: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    /// Training images; `candidates` holds the gold alone.
    pub train: Vec<HypothesisSet>,
    /// Related/unrelated corpus over the training images: the gold (target
    /// 1) and a gold word of another topic (target 0) per image.
    pub pairs: Vec<TrainingPair>,
    pub test: Vec<HypothesisSet>,
    pub embeddings: EmbeddingTable,
    /// Whitespace-tokenized text for the unigram model.
    pub unigram_text: String,
    pub lexicon: Lexicon,
}

impl SyntheticCorpus {
    /// The pairs of the first `overfit_items` images (200 by default).
    pub fn overfit_pairs(&self, cfg: &SyntheticConfig) -> &[TrainingPair] {
        &self.pairs[..(2 * cfg.overfit_items).min(self.pairs.len())]
    }

    /// `(gold, context)` items of the training images.
    pub fn train_items(&self) -> Vec<(String, ContextBundle)> {
        self.train.iter().map(|h| (h.gold.clone(), h.ctx.clone())).collect()
    }
}

fn fresh_word(rng: &mut SeededRng, taken: &mut std::collections::HashSet<String>) -> String {
    loop {
        let n = rng.random_range(2..=3);
        let w: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
        if taken.insert(w.clone()) {
            return w;
        }
    }
}

/// A misspelling of `word`: one character replaced, not itself a vocabulary
/// word.
fn garble(word: &str, rng: &mut SeededRng, vocab: &std::collections::HashSet<String>) -> String {
    let chars: Vec<char> = word.chars().collect();
    loop {
        let mut c = chars.clone();
        let i = rng.random_range(0..c.len());
        c[i] = rng.random_range(b'a'..=b'z') as char;
        let w: String = c.into_iter().collect();
        if w != word && !vocab.contains(&w) {
            return w;
        }
    }
}

fn context(topic: &Topic, others: &[&Topic], rng: &mut SeededRng) -> ContextBundle {
    let mut objects: Vec<Label> = topic
        .objects
        .choose_multiple(rng, 2)
        .map(|o| Label::new(o, rng.random_range(0.5..1.0)).expect("valid label"))
        .collect();
    if rng.random_bool(0.3) {
        let other = others.choose(rng).expect("several topics");
        let o = other.objects.choose(rng).expect("non-empty");
        objects.push(Label::new(o, rng.random_range(0.1..0.5)).expect("valid label"));
    }
    let place = topic.places.choose(rng).expect("non-empty");
    let places = vec![Label::new(place, rng.random_range(0.4..1.0)).expect("valid label")];
    let caption = format!(
        "{} {} {} {} {} {}",
        FILLER.choose(rng).expect("non-empty"),
        objects[0].label,
        FILLER.choose(rng).expect("non-empty"),
        topic.caption.choose(rng).expect("non-empty"),
        FILLER.choose(rng).expect("non-empty"),
        topic.caption.choose(rng).expect("non-empty"),
    );
    ContextBundle::new(objects, places, &caption)
}

/// Descending softmax-like scores summing to at most 1.
fn baseline_scores(k: usize, rng: &mut SeededRng) -> Vec<f64> {
    let mut s: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = s.iter().sum::<f64>() * rng.random_range(1.0..1.3);
    s.iter().map(|v| v / total).collect()
}

pub fn generate(cfg: &SyntheticConfig, seed: u64) -> Result<SyntheticCorpus> {
    let mut rng = rng_for(seed, "synthetic");
    let mut taken: std::collections::HashSet<String> = FILLER.iter().map(|s| s.to_string()).collect();
    let mut topics = Vec::new();
    for _ in 0..cfg.topics {
        let mut words = |n: usize, rng: &mut SeededRng| (0..n).map(|_| fresh_word(rng, &mut taken)).collect::<Vec<_>>();
        topics.push(Topic {
            golds: words(cfg.golds_per_topic, &mut rng),
            objects: words(cfg.objects_per_topic, &mut rng),
            places: words(cfg.places_per_topic, &mut rng),
            caption: words(cfg.caption_words_per_topic, &mut rng),
        });
    }

    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rows = Vec::new();
    for t in &topics {
        let centre: Vec<f64> = (0..cfg.dim).map(|_| normal.sample(&mut rng)).collect();
        for w in t.golds.iter().chain(&t.objects).chain(&t.places).chain(&t.caption) {
            let v = centre.iter().map(|c| c + 0.4 * normal.sample(&mut rng)).collect();
            rows.push((w.clone(), v));
        }
    }
    for w in FILLER {
        rows.push((w.to_string(), (0..cfg.dim).map(|_| 0.3 * normal.sample(&mut rng)).collect()));
    }
    let embeddings = EmbeddingTable::from_rows(rows)?;

    let pick = |rng: &mut SeededRng| rng.random_range(0..topics.len());
    let others = |t: usize| -> Vec<&Topic> { topics.iter().enumerate().filter(|(i, _)| *i != t).map(|(_, x)| x).collect() };

    let mut train = Vec::new();
    let mut pairs = Vec::new();
    for i in 0..cfg.train_items {
        let t = pick(&mut rng);
        let rest = others(t);
        let gold = topics[t].golds.choose(&mut rng).expect("non-empty").clone();
        let ctx = context(&topics[t], &rest, &mut rng);
        let other = rest.choose(&mut rng).expect("several topics");
        let negative = other.golds.choose(&mut rng).expect("non-empty");
        pairs.push(TrainingPair::new(&gold, ctx.clone(), 1.0)?);
        pairs.push(TrainingPair::new(negative, ctx.clone(), 0.0)?);
        train.push(HypothesisSet::new(&format!("train{i:04}"), &gold, vec![Candidate::new(&gold, 1.0)?], ctx)?);
    }

    let mut test = Vec::new();
    for i in 0..cfg.test_sets {
        let t = pick(&mut rng);
        let rest = others(t);
        let gold = topics[t].golds.choose(&mut rng).expect("non-empty").clone();
        let ctx = context(&topics[t], &rest, &mut rng);
        let mut distractors: Vec<String> = Vec::new();
        while distractors.len() < cfg.k - 1 {
            let w = if rng.random_bool(0.7) {
                let o = rest.choose(&mut rng).expect("several topics");
                o.golds.choose(&mut rng).expect("non-empty").clone()
            } else {
                garble(&gold, &mut rng, &taken)
            };
            if w != gold && !distractors.contains(&w) {
                distractors.push(w);
            }
        }
        distractors.shuffle(&mut rng);
        let gold_rank = rng.random_range(0..cfg.k.min(4));
        distractors.insert(gold_rank, gold.clone());
        let scores = baseline_scores(cfg.k, &mut rng);
        let cands = distractors
            .iter()
            .zip(scores)
            .map(|(w, s)| Candidate::new(w, s))
            .collect::<Result<Vec<_>>>()?;
        test.push(HypothesisSet::new(&format!("test{i:04}"), &gold, cands, ctx)?);
    }

    // every gold word at a similar frequency, context and filler words around it
    let mut vocab: Vec<&String> = topics
        .iter()
        .flat_map(|t| t.golds.iter().chain(&t.objects).chain(&t.places).chain(&t.caption))
        .collect();
    vocab.sort();
    let mut tokens: Vec<&str> = Vec::with_capacity(cfg.unigram_tokens);
    while tokens.len() < cfg.unigram_tokens {
        tokens.push(if rng.random_bool(0.3) {
            FILLER.choose(&mut rng).expect("non-empty")
        } else {
            vocab.choose(&mut rng).expect("non-empty").as_str()
        });
    }
    let unigram_text = tokens
        .chunks(12)
        .map(|line| line.join(" "))
        .collect::<Vec<_>>()
        .join("\n");

    // most gold words are in the lexicon, one per topic is left out
    let lexicon = Lexicon::new(topics.iter().flat_map(|t| t.golds.iter().skip(1)));

    Ok(SyntheticCorpus {
        train,
        pairs,
        test,
        embeddings,
        unigram_text,
        lexicon,
    })
}
