//! Command-line surface: argument types and the command implementations.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluator::{k_sweep, metrics, records_as_ranked, EvalReport, Lexicon};
use crate::gradsuite::{run_suite, TOLERANCE};
use crate::io;
use crate::layers::EmbeddingTable;
use crate::relnet::{ModelConfig, RelatednessModel, Variant};
use crate::reranker::{rerank, reranked_set, CosineMode, FusionConfig, HypothesisSet, Scorer, UnigramModel};
use crate::seed::{rng_for, DEFAULT_SEED};
use crate::synthetic::{generate, SyntheticConfig};
use crate::trainer::{make_pairs, train, NadamConfig, TrainConfig, TrainingPair};

#[derive(Debug, Parser)]
#[command(name = "ctxrank", version, about = "Re-rank k-best text-spotting hypotheses by relatedness to visual context")]
pub struct Cli {
    /// Root seed; every random stream is derived from it by name.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a relatedness model and write it with a JSON manifest.
    Train(TrainArgs),
    /// Re-rank hypothesis lists and write them with per-candidate traces.
    Rerank(RerankArgs),
    /// Score already ranked hypothesis lists.
    Eval(EvalArgs),
    /// Re-rank and score for k = 1…k-max.
    Sweep(SweepArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
    /// Write the planted-signal synthetic corpus.
    MakeSynthetic(SyntheticArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerKind {
    Neural,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dims {
    /// 64 kernels per channel, LSTM 64, MLP 128-64, 32 context slots
    Standard,
    /// 32 kernels per channel, LSTM 32, MLP 64-32, 12 context slots
    Compact,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub context: PathBuf,
    /// Explicit training pairs (`#pairs v1`).
    #[arg(long, conflicts_with = "hypotheses", required_unless_present = "hypotheses")]
    pub pairs: Option<PathBuf>,
    /// Gold words to sample pairs from (`#hypotheses v1`).
    #[arg(long)]
    pub hypotheses: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, default_value = "fdclstm-at")]
    pub variant: Variant,
    #[arg(long, value_enum, default_value_t = Dims::Standard)]
    pub dims: Dims,
    /// Negatives per gold word when sampling from hypotheses.
    #[arg(long, default_value_t = 1)]
    pub neg_ratio: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 2e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub validation_split: f64,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Stop once training accuracy reaches this value.
    #[arg(long)]
    pub stop_at_accuracy: Option<f64>,
    #[arg(long)]
    pub freeze_embeddings: bool,
    /// Model file; the manifest goes next to it with a `.manifest.json` suffix.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoringArgs {
    #[arg(long)]
    pub hypotheses: PathBuf,
    #[arg(long)]
    pub context: PathBuf,
    #[arg(long, value_enum, default_value_t = ScorerKind::Neural)]
    pub scorer: ScorerKind,
    /// Trained model (neural scorer).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Word vectors (cosine scorer).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value = "max")]
    pub cosine_mode: CosineMode,
    /// Plain-text corpus for unigram probabilities.
    #[arg(long)]
    pub unigram_corpus: Option<PathBuf>,
    /// Add-α smoothing of the unigram model.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Exponents λb,λr,λc,λu of baseline, relatedness, context confidence and unigram.
    #[arg(long, default_value = "1,1,0,1")]
    pub fusion_weights: FusionConfig,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    #[command(flatten)]
    pub scoring: ScoringArgs,
    /// Keep only the top k baseline candidates before re-ranking.
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Output directory for `reranked.tsv` and `traces.tsv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ranked hypothesis lists (e.g. the output of `rerank`).
    #[arg(long)]
    pub hypotheses: PathBuf,
    /// Word list for the dict metric.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Output directory for `report.txt` and `report.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scoring: ScoringArgs,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub k_max: usize,
    /// Output directory for `report.txt` and `report.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Number of consecutive seeds, starting at --seed.
    #[arg(long, default_value_t = 100)]
    pub seeds: usize,
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
}

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Train(a) => cmd_train(&a, seed),
        Command::Rerank(a) => cmd_rerank(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a, seed),
        Command::MakeSynthetic(a) => cmd_synthetic(&a, seed),
    }
}

fn log_config(name: &str, cfg: &impl Serialize) -> Result<()> {
    log::info!("{name} effective config: {}", serde_json::to_string(cfg)?);
    Ok(())
}

fn context_vocabulary(pairs: &[TrainingPair]) -> HashSet<String> {
    let mut words = HashSet::new();
    for p in pairs {
        words.extend(crate::relnet::tokenize(&p.candidate));
        words.extend(p.ctx.sequence());
    }
    words
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    model_file: &'a Path,
    context: &'a Path,
    pairs: Option<&'a Path>,
    hypotheses: Option<&'a Path>,
    embeddings: &'a Path,
    neg_ratio: usize,
    num_pairs: usize,
    vocabulary: usize,
    num_parameters: usize,
    fingerprint: u64,
    model: &'a ModelConfig,
    training: &'a TrainConfig,
    history: &'a crate::trainer::History,
}

fn cmd_train(a: &TrainArgs, seed: u64) -> Result<()> {
    let contexts = io::load_context(&a.context)?;
    let pairs = match (&a.pairs, &a.hypotheses) {
        (Some(p), _) => io::load_pairs(p, &contexts)?,
        (None, Some(h)) => {
            let mut sets = io::load_hypotheses(h)?;
            io::attach_contexts(&mut sets, &contexts);
            let corpus: Vec<_> = sets.into_iter().map(|s| (s.gold, s.ctx)).collect();
            make_pairs(&corpus, a.neg_ratio, &mut rng_for(seed, "pairs"))?
        }
        (None, None) => return Err(Error::Config("either --pairs or --hypotheses is required".into())),
    };
    // only rows the training data can reach enter the model
    let emb = io::load_embeddings(&a.embeddings, Some(&context_vocabulary(&pairs)))?;
    let model_cfg = match a.dims {
        Dims::Standard => ModelConfig::new(a.variant, emb.dim()),
        Dims::Compact => ModelConfig::compact(a.variant, emb.dim()),
    };
    let train_cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        nadam: NadamConfig {
            lr: a.lr,
            ..NadamConfig::default()
        },
        validation_split: a.validation_split,
        patience: a.patience,
        stop_at_train_accuracy: a.stop_at_accuracy,
        freeze_embeddings: a.freeze_embeddings,
    };
    log_config("model", &model_cfg)?;
    log_config("training", &train_cfg)?;
    let mut model = RelatednessModel::new(model_cfg.clone(), &emb, &mut rng_for(seed, "init"))?;
    let history = train(&mut model, &pairs, &train_cfg, seed)?;
    model.save(&a.out)?;
    let manifest = Manifest {
        seed,
        model_file: &a.out,
        context: &a.context,
        pairs: a.pairs.as_deref(),
        hypotheses: a.hypotheses.as_deref(),
        embeddings: &a.embeddings,
        neg_ratio: a.neg_ratio,
        num_pairs: pairs.len(),
        vocabulary: model.vocab().len(),
        num_parameters: model.num_parameters(),
        fingerprint: model.fingerprint(),
        model: &model_cfg,
        training: &train_cfg,
        history: &history,
    };
    let manifest_path = manifest_path(&a.out);
    io_write(&manifest_path, &serde_json::to_string_pretty(&manifest)?)?;
    if let Some(last) = history.epochs.last() {
        println!(
            "trained {} on {} pairs for {} epochs: loss {:.4}, accuracy {:.3}",
            model_cfg.variant,
            pairs.len(),
            history.epochs.len(),
            last.loss,
            last.accuracy
        );
    }
    println!("wrote {} and {}", a.out.display(), manifest_path.display());
    Ok(())
}

pub fn manifest_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn io_write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

enum Backend {
    Neural(Box<RelatednessModel>),
    Cosine(EmbeddingTable, CosineMode),
}

impl Backend {
    fn scorer(&self) -> Scorer<'_> {
        match self {
            Backend::Neural(m) => Scorer::Neural(m),
            Backend::Cosine(e, mode) => Scorer::Cosine(e, *mode),
        }
    }
}

struct Loaded {
    sets: Vec<HypothesisSet>,
    backend: Backend,
    lm: Option<UnigramModel>,
}

fn load_scoring(a: &ScoringArgs) -> Result<Loaded> {
    a.fusion_weights.validate()?;
    let mut sets = io::load_hypotheses(&a.hypotheses)?;
    let contexts = io::load_context(&a.context)?;
    let unresolved = io::attach_contexts(&mut sets, &contexts);
    log::info!(
        "{} hypothesis sets, {} without context",
        sets.len(),
        unresolved.len()
    );
    let needs_scorer = a.fusion_weights.relatedness > 0.0;
    let backend = match a.scorer {
        ScorerKind::Neural => {
            let path = a.model.as_ref().filter(|_| needs_scorer);
            match path {
                Some(p) => {
                    let m = RelatednessModel::load(p)?;
                    if let Some(e) = &a.embeddings {
                        m.check_embeddings(&io::load_embeddings(e, None)?)?;
                    }
                    Backend::Neural(Box::new(m))
                }
                None if needs_scorer => {
                    return Err(Error::Config("the neural scorer needs --model".into()));
                }
                None => Backend::Cosine(EmbeddingTable::from_rows(vec![("-".into(), vec![0.0])])?, a.cosine_mode),
            }
        }
        ScorerKind::Cosine => {
            let path = a
                .embeddings
                .as_ref()
                .ok_or_else(|| Error::Config("the cosine scorer needs --embeddings".into()))?;
            Backend::Cosine(io::load_embeddings(path, None)?, a.cosine_mode)
        }
    };
    let lm = match &a.unigram_corpus {
        Some(p) => Some(io::load_unigram(p, a.alpha)?),
        None if a.fusion_weights.unigram > 0.0 => {
            return Err(Error::Config(
                "a positive unigram weight needs --unigram-corpus".into(),
            ))
        }
        None => None,
    };
    log::info!(
        "scoring: scorer {:?}, fusion weights {:?}, unigram α {}",
        a.scorer,
        a.fusion_weights.weights(),
        a.alpha
    );
    Ok(Loaded { sets, backend, lm })
}

fn cmd_rerank(a: &RerankArgs) -> Result<()> {
    let Loaded { sets, backend, lm } = load_scoring(&a.scoring)?;
    let scorer = backend.scorer();
    let mut out_sets = Vec::with_capacity(sets.len());
    let mut traces = Vec::new();
    for h in &sets {
        let h = a.k_max.map_or_else(|| h.clone(), |k| h.truncated(k));
        let ranked = rerank(&h, &scorer, lm.as_ref(), &a.scoring.fusion_weights)?;
        for (i, c) in ranked.iter().enumerate() {
            traces.push(io::TraceRow {
                image_id: h.image_id.clone(),
                rank: i + 1,
                candidate: c.clone(),
            });
        }
        out_sets.push(reranked_set(&h, &ranked));
    }
    io::write_hypotheses(a.out.join("reranked.tsv"), &out_sets)?;
    io::write_traces(a.out.join("traces.tsv"), &traces)?;
    println!("re-ranked {} sets into {}", out_sets.len(), a.out.display());
    Ok(())
}

fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    io_write(&dir.join("report.txt"), &report.render())?;
    io_write(&dir.join("report.json"), &report.to_json()?)?;
    print!("{}", report.render());
    Ok(())
}

fn load_lexicon(path: &Option<PathBuf>) -> Result<Option<Lexicon>> {
    path.as_ref().map(io::load_lexicon).transpose()
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let sets = io::load_hypotheses(&a.hypotheses)?;
    let lexicon = load_lexicon(&a.lexicon)?;
    let records = records_as_ranked(&sets, lexicon.as_ref());
    let k = sets.iter().map(HypothesisSet::k).max().unwrap_or(1);
    let report = EvalReport::from_rows(records.len(), vec![metrics(&records, k)?]);
    write_report(&a.out, &report)
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let Loaded { sets, backend, lm } = load_scoring(&a.scoring)?;
    let lexicon = load_lexicon(&a.lexicon)?;
    let report = k_sweep(
        &sets,
        &backend.scorer(),
        lm.as_ref(),
        &a.scoring.fusion_weights,
        lexicon.as_ref(),
        a.k_max,
    )?;
    write_report(&a.out, &report)
}

fn cmd_gradcheck(a: &GradcheckArgs, seed: u64) -> Result<()> {
    let start = std::time::Instant::now();
    let report = run_suite(seed, a.seeds)?;
    println!("{:<20} {:>12} {:>6}", "check", "max rel err", "seed");
    for r in report.worst_by_name() {
        println!("{:<20} {:>12.3e} {:>6}", r.name, r.check.max_rel_error, r.seed);
    }
    println!(
        "{} checks over {} seeds in {:.1}s, max relative error {:.3e} (tolerance {TOLERANCE:e})",
        report.results.len(),
        a.seeds,
        start.elapsed().as_secs_f64(),
        report.max_error()
    );
    let failures: Vec<_> = report.failures().collect();
    if failures.is_empty() {
        return Ok(());
    }
    for f in &failures {
        eprintln!("FAIL {} seed {}: {:.3e}", f.name, f.seed, f.check.max_rel_error);
    }
    Err(Error::Config(format!("{} gradient checks exceed the tolerance", failures.len())))
}

fn cmd_synthetic(a: &SyntheticArgs, seed: u64) -> Result<()> {
    let cfg = SyntheticConfig {
        dim: a.dim,
        ..SyntheticConfig::default()
    };
    let c = generate(&cfg, seed)?;
    let dir = &a.out;
    let mut contexts = io::ContextMap::new();
    for h in c.train.iter().chain(&c.test) {
        contexts.insert(h.image_id.clone(), h.ctx.clone());
    }
    io::write_context(dir.join("context.tsv"), &contexts)?;
    io::write_hypotheses(dir.join("train.tsv"), &c.train)?;
    io::write_hypotheses(dir.join("test.tsv"), &c.test)?;
    let ids: Vec<(&str, &TrainingPair)> = c
        .pairs
        .iter()
        .enumerate()
        .map(|(i, p)| (c.train[i / 2].image_id.as_str(), p))
        .collect();
    io::write_pairs(dir.join("pairs.tsv"), &ids)?;
    io::write_pairs(dir.join("overfit_pairs.tsv"), &ids[..c.overfit_pairs(&cfg).len()])?;
    io::write_embeddings(dir.join("embeddings.txt"), &c.embeddings)?;
    io_write(&dir.join("unigram.txt"), &c.unigram_text)?;
    io::write_lexicon(dir.join("lexicon.txt"), &c.lexicon)?;
    println!(
        "wrote {} training images ({} pairs), {} test sets and {} vectors to {}",
        c.train.len(),
        c.pairs.len(),
        c.test.len(),
        c.embeddings.len(),
        dir.display()
    );
    Ok(())
}
