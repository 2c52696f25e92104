//! Helpers shared by the integration tests: a naive metric oracle, random
//! evaluation records and the synthetic training setups.
#![allow(dead_code)]

use ctxrank::evaluator::{EvalRecord, Lexicon};
use ctxrank::relnet::{ModelConfig, RelatednessModel, Variant};
use ctxrank::seed::rng_for;
use ctxrank::synthetic::{generate, SyntheticConfig, SyntheticCorpus};
use ctxrank::trainer::{train, History, TrainConfig, TrainingPair};
use rand::Rng;

/// Seed of the corpus every benchmark trains and tests on.
pub const CORPUS_SEED: u64 = 42;

pub fn corpus() -> (SyntheticConfig, SyntheticCorpus) {
    let cfg = SyntheticConfig::default();
    let c = generate(&cfg, CORPUS_SEED).expect("synthetic corpus");
    (cfg, c)
}

/// full, dict, list and MRR recomputed from the raw lists.
#[derive(Debug, Clone, Copy)]
pub struct NaiveMetrics {
    pub full: f64,
    pub dict: Option<f64>,
    pub list: Option<f64>,
    pub mrr: f64,
}

pub fn naive_metrics(items: &[(String, Vec<String>)], lexicon: Option<&[String]>) -> NaiveMetrics {
    let n = items.len() as f64;
    let top1 = |gold: &String, ranked: &Vec<String>| ranked.first() == Some(gold);
    let full = items.iter().filter(|(g, r)| top1(g, r)).count() as f64 / n;
    let ratio = |keep: &dyn Fn(&String, &Vec<String>) -> bool| {
        let sub: Vec<_> = items.iter().filter(|(g, r)| keep(g, r)).collect();
        if sub.is_empty() {
            None
        } else {
            Some(sub.iter().filter(|(g, r)| top1(g, r)).count() as f64 / sub.len() as f64)
        }
    };
    let dict = lexicon.and_then(|lex| ratio(&|g, _| lex.contains(g)));
    let list = ratio(&|g, r| r.contains(g));
    let mut mrr = 0.0;
    for (g, r) in items {
        for (i, w) in r.iter().enumerate() {
            if w == g {
                mrr += 1.0 / (i + 1) as f64;
                break;
            }
        }
    }
    NaiveMetrics {
        full,
        dict,
        list,
        mrr: mrr / n,
    }
}

/// `n` records over a small alphabet so hits, misses, lexicon gaps and
/// absent golds all occur. Words within a list are distinct.
pub fn random_items(n: usize, rng: &mut impl Rng) -> (Vec<(String, Vec<String>)>, Vec<String>) {
    let alphabet: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
    let lexicon: Vec<String> = alphabet.iter().filter(|_| rng.random_bool(0.6)).cloned().collect();
    let items = (0..n)
        .map(|_| {
            let gold = alphabet[rng.random_range(0..alphabet.len())].clone();
            let k = rng.random_range(1..=10);
            let mut pool = alphabet.clone();
            let mut ranked = Vec::with_capacity(k);
            for _ in 0..k {
                ranked.push(pool.swap_remove(rng.random_range(0..pool.len())));
            }
            (gold, ranked)
        })
        .collect();
    (items, lexicon)
}

pub fn as_records(items: &[(String, Vec<String>)], lexicon: Option<&Lexicon>) -> Vec<EvalRecord> {
    items
        .iter()
        .enumerate()
        .map(|(i, (g, r))| EvalRecord::new(&format!("img{i}"), g, r.clone(), lexicon))
        .collect()
}

/// Overfit run: compact model, no validation split, stop at 0.95.
pub fn overfit(variant: Variant, pairs: &[TrainingPair], c: &SyntheticCorpus, seed: u64) -> History {
    let cfg = TrainConfig {
        epochs: 200,
        validation_split: 0.0,
        stop_at_train_accuracy: Some(0.95),
        ..TrainConfig::default()
    };
    let mut m = model(variant, c, seed);
    train(&mut m, pairs, &cfg, seed).expect("training")
}

pub fn model(variant: Variant, c: &SyntheticCorpus, seed: u64) -> RelatednessModel {
    let cfg = ModelConfig::compact(variant, c.embeddings.dim());
    RelatednessModel::new(cfg, &c.embeddings, &mut rng_for(seed, "init")).expect("model")
}

/// The re-ranker of the planted benchmark: the attention variant fitted to
/// every training pair with early stopping on a held-out tenth.
pub fn reranker_model(c: &SyntheticCorpus, seed: u64) -> RelatednessModel {
    let cfg = TrainConfig {
        epochs: 60,
        validation_split: 0.1,
        patience: 10,
        ..TrainConfig::default()
    };
    let mut m = model(Variant::Attention, c, seed);
    train(&mut m, &c.pairs, &cfg, seed).expect("training");
    m
}
pub mod invariants;
