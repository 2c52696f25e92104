use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::EmbeddingTable;
use crate::relnet::{normalize, ContextBundle, RelatednessModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CosineMode {
    #[default]
    Max,
    Mean,
}

impl std::str::FromStr for CosineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "max" => Ok(Self::Max),
            "mean" => Ok(Self::Mean),
            other => Err(Error::Config(format!("unknown cosine mode `{other}` (max, mean)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cosine {
    pub score: f64,
    /// The word or every context term had no vector; `score` is 0.
    pub oov: bool,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Cosine between `word` and each object and place term of `ctx` (the
/// caption is not used), aggregated by `mode`.
pub fn cosine_relatedness(word: &str, ctx: &ContextBundle, emb: &EmbeddingTable, mode: CosineMode) -> Cosine {
    let oov = Cosine { score: 0.0, oov: true };
    let Some(w) = emb.vector(&normalize(word)) else {
        return oov;
    };
    let sims: Vec<f64> = ctx
        .label_tokens()
        .iter()
        .filter_map(|t| emb.vector(t))
        .map(|v| cosine(w, v))
        .collect();
    if sims.is_empty() {
        return oov;
    }
    let score = match mode {
        CosineMode::Max => sims.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        CosineMode::Mean => sims.iter().sum::<f64>() / sims.len() as f64,
    };
    Cosine { score, oov: false }
}

/// Source of relatedness scores in [0, 1] for re-ranking.
pub enum Scorer<'a> {
    Neural(&'a RelatednessModel),
    /// Cosine in [−1, 1] mapped to [0, 1] by `(c + 1) / 2`; OOV gives 0.
    Cosine(&'a EmbeddingTable, CosineMode),
}

impl Scorer<'_> {
    pub fn relatedness(&self, words: &[&str], ctx: &ContextBundle) -> Result<Vec<f64>> {
        match self {
            Scorer::Neural(m) => {
                let pairs: Vec<(&str, &ContextBundle)> = words.iter().map(|w| (*w, ctx)).collect();
                m.score_batch(&pairs)
            }
            Scorer::Cosine(emb, mode) => Ok(words
                .iter()
                .map(|w| {
                    let c = cosine_relatedness(w, ctx, emb, *mode);
                    if c.oov {
                        0.0
                    } else {
                        (c.score + 1.0) / 2.0
                    }
                })
                .collect()),
        }
    }
}
