use serde::{Deserialize, Serialize};

use super::hypothesis::{Candidate, HypothesisSet};
use super::scorer::Scorer;
use super::unigram::UnigramModel;
use crate::error::{Error, Result};
use crate::relnet::ContextBundle;

/// Lower bound applied to every fused component before taking logs.
pub const PROB_FLOOR: f64 = 1e-9;

/// Exponents of the log-linear fusion, in the order baseline, relatedness,
/// context confidence, unigram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub baseline: f64,
    pub relatedness: f64,
    pub context: f64,
    pub unigram: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self::new([1.0, 1.0, 0.0, 1.0])
    }
}

impl FusionConfig {
    pub fn new([baseline, relatedness, context, unigram]: [f64; 4]) -> Self {
        Self {
            baseline,
            relatedness,
            context,
            unigram,
        }
    }

    pub fn weights(&self) -> [f64; 4] {
        [self.baseline, self.relatedness, self.context, self.unigram]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.weights();
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Config(format!("fusion weights must be finite and ≥ 0, got {w:?}")));
        }
        if w.iter().all(|x| *x == 0.0) {
            return Err(Error::Config("at least one fusion weight must be positive".into()));
        }
        Ok(())
    }
}

impl std::str::FromStr for FusionConfig {
    type Err = Error;

    /// Parses `λb,λr,λc,λu`.
    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("fusion weights `{s}`: {e}")))?;
        let w: [f64; 4] = parts
            .try_into()
            .map_err(|_| Error::Config(format!("fusion weights `{s}`: expected four comma-separated numbers")))?;
        let cfg = Self::new(w);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `exp(Σ λ_i ln max(x_i, 1e-9))` over baseline, relatedness, context
/// confidence and unigram probability.
pub fn fuse_scores(baseline: f64, relatedness: f64, ctx_conf: f64, p_uni: f64, cfg: &FusionConfig) -> Result<f64> {
    cfg.validate()?;
    let log = |x: f64| x.max(PROB_FLOOR).ln();
    Ok((cfg.baseline * log(baseline)
        + cfg.relatedness * log(relatedness)
        + cfg.context * log(ctx_conf)
        + cfg.unigram * log(p_uni))
    .exp())
}

/// Confidence of the visual context for `word`: the highest classifier
/// confidence among object and place labels containing the word, else the
/// highest confidence of any label, and 1 for a context without labels.
pub fn ctx_confidence(word: &str, ctx: &ContextBundle) -> f64 {
    ctx.matched_confidence(word)
        .or_else(|| ctx.max_confidence())
        .unwrap_or(1.0)
}

/// A candidate after re-ranking with every score component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub word: String,
    pub baseline: f64,
    pub relatedness: f64,
    pub context: f64,
    pub unigram: f64,
    pub fused: f64,
}

impl RankedCandidate {
    pub fn candidate(&self) -> Candidate {
        Candidate {
            word: self.word.clone(),
            baseline: self.baseline,
        }
    }
}

/// Orders the candidates of `h` by fused score, highest first. Ties fall
/// back to the baseline score, then to the word. Components with weight 0
/// are not computed (relatedness and unigram are reported as 1).
pub fn rerank(h: &HypothesisSet, scorer: &Scorer<'_>, lm: Option<&UnigramModel>, cfg: &FusionConfig) -> Result<Vec<RankedCandidate>> {
    cfg.validate()?;
    if h.candidates.is_empty() {
        return Err(Error::Empty("candidate list"));
    }
    let words: Vec<&str> = h.candidates.iter().map(|c| c.word.as_str()).collect();
    let rel = if cfg.relatedness > 0.0 {
        scorer.relatedness(&words, &h.ctx)?
    } else {
        vec![1.0; words.len()]
    };
    let uni: Vec<f64> = match (cfg.unigram > 0.0, lm) {
        (false, _) => vec![1.0; words.len()],
        (true, Some(lm)) => words.iter().map(|w| lm.prob(w)).collect(),
        (true, None) => {
            return Err(Error::Config(
                "a positive unigram weight needs a unigram corpus".into(),
            ))
        }
    };
    let mut out = h
        .candidates
        .iter()
        .zip(rel.into_iter().zip(uni))
        .map(|(c, (r, u))| {
            let ctx = if cfg.context > 0.0 { ctx_confidence(&c.word, &h.ctx) } else { 1.0 };
            Ok(RankedCandidate {
                word: c.word.clone(),
                baseline: c.baseline,
                relatedness: r,
                context: ctx,
                unigram: u,
                fused: fuse_scores(c.baseline, r, ctx, u, cfg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| {
        b.fused
            .total_cmp(&a.fused)
            .then(b.baseline.total_cmp(&a.baseline))
            .then_with(|| a.word.cmp(&b.word))
    });
    Ok(out)
}

/// Re-ranked copy of `h`, candidates carrying their fused score.
pub fn reranked_set(h: &HypothesisSet, ranked: &[RankedCandidate]) -> HypothesisSet {
    HypothesisSet {
        candidates: ranked
            .iter()
            .map(|r| Candidate {
                word: r.word.clone(),
                baseline: r.fused,
            })
            .collect(),
        ..h.clone()
    }
}
