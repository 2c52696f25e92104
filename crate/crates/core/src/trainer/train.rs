use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::nadam::{NadamConfig, NadamState};
use super::pairs::{bce_loss, TrainingPair};
use crate::error::{Error, Result};
use crate::layers::{BatchNormParams, Mode, ParamStore};
use crate::relnet::{Encoded, RelatednessModel};
use crate::seed::rng_for;
use crate::tensor::Graph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub nadam: NadamConfig,
    /// Fraction of pairs held out for early stopping; 0 trains on all.
    pub validation_split: f64,
    /// Epochs without a new best validation loss before stopping.
    pub patience: usize,
    /// Stop once inference-mode training accuracy reaches this value.
    pub stop_at_train_accuracy: Option<f64>,
    pub freeze_embeddings: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            nadam: NadamConfig::default(),
            validation_split: 0.1,
            patience: 5,
            stop_at_train_accuracy: None,
            freeze_embeddings: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::BatchTooSmall(self.batch_size));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_split) {
            return Err(Error::Config(format!(
                "validation split {} outside [0, 1)",
                self.validation_split
            )));
        }
        self.nadam.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean train-mode (dropout on) loss over the epoch's batches.
    pub loss: f64,
    /// Inference-mode loss over the training pairs after the epoch.
    pub eval_loss: f64,
    /// Inference-mode accuracy at threshold 0.5 over the training pairs.
    pub accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (best validation loss), if a
    /// validation set was used.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl History {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.accuracy)
    }
}

struct Split {
    train: Vec<(Encoded, f64)>,
    val: Vec<(Encoded, f64)>,
}

fn split(model: &RelatednessModel, pairs: &[TrainingPair], cfg: &TrainConfig, seed: u64) -> Result<Split> {
    let mut all = pairs
        .iter()
        .map(|p| Ok((model.encode(&p.candidate, &p.ctx)?, p.target)))
        .collect::<Result<Vec<_>>>()?;
    let n_val = (all.len() as f64 * cfg.validation_split).round() as usize;
    let mut val = Vec::new();
    if n_val > 0 {
        all.shuffle(&mut rng_for(seed, "split"));
        val = all.split_off(all.len() - n_val);
    }
    if all.len() < cfg.batch_size {
        return Err(Error::Config(format!(
            "{} training pairs for batch size {}",
            all.len(),
            cfg.batch_size
        )));
    }
    Ok(Split { train: all, val })
}

/// Batches of `size`, with a trailing batch of one merged into the one
/// before it (train-mode batch norm needs two rows).
fn batches(n: usize, size: usize) -> Vec<std::ops::Range<usize>> {
    let mut out: Vec<_> = (0..n).step_by(size).map(|s| s..(s + size).min(n)).collect();
    if out.len() > 1 && out.last().is_some_and(|r| r.len() == 1) {
        let last = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").end = last.end;
    }
    out
}

/// Inference-mode mean loss and accuracy.
fn evaluate(model: &RelatednessModel, data: &[(Encoded, f64)], chunk: usize) -> Result<(f64, f64)> {
    let (mut loss, mut hits) = (0.0, 0usize);
    for part in data.chunks(chunk.max(1)) {
        let enc: Vec<Encoded> = part.iter().map(|(e, _)| e.clone()).collect();
        for (p, (_, t)) in model.score_encoded(&enc)?.into_iter().zip(part) {
            loss += bce_loss(p, *t);
            hits += usize::from((p >= 0.5) == (*t >= 0.5));
        }
    }
    let n = data.len() as f64;
    Ok((loss / n, hits as f64 / n))
}

/// Fits `model` to `pairs`. Randomness comes from the named streams
/// "split", "shuffle" and "dropout" under `seed`. With a validation split,
/// the parameters of the best validation epoch are restored at the end.
pub fn train(model: &mut RelatednessModel, pairs: &[TrainingPair], cfg: &TrainConfig, seed: u64) -> Result<History> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Empty("training pairs"));
    }
    model.freeze_embeddings(cfg.freeze_embeddings);
    let Split { mut train, val } = split(model, pairs, cfg, seed)?;
    let mut opt = NadamState::new(model.store(), cfg.nadam)?;
    let mut shuffle = rng_for(seed, "shuffle");
    let mut drop = rng_for(seed, "dropout");
    let mut history = History::default();
    let mut best: Option<(f64, ParamStore, Vec<BatchNormParams>)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.epochs {
        train.shuffle(&mut shuffle);
        let ranges = batches(train.len(), cfg.batch_size);
        let mut loss_sum = 0.0;
        for r in &ranges {
            let batch: Vec<Encoded> = train[r.clone()].iter().map(|(e, _)| e.clone()).collect();
            let targets: Vec<f64> = train[r.clone()].iter().map(|(_, t)| *t).collect();
            let (grads, stats, loss) = {
                let mut g = Graph::new();
                let fwd = model.forward(&mut g, &batch, Mode::Train, &mut drop)?;
                let loss = g.bce(fwd.scores, &targets)?;
                g.backward_scalar(loss)?;
                (fwd.params.grads(&g), fwd.stats, g.value(loss).data()[0])
            };
            opt.step(model.store_mut(), &grads)?;
            model.apply_stats(&stats);
            loss_sum += loss;
        }
        let (eval_loss, accuracy) = evaluate(model, &train, cfg.batch_size.max(64))?;
        let mut record = EpochRecord {
            epoch,
            loss: loss_sum / ranges.len() as f64,
            eval_loss,
            accuracy,
            val_loss: None,
            val_accuracy: None,
        };
        let mut stop = false;
        if !val.is_empty() {
            let (vl, va) = evaluate(model, &val, cfg.batch_size.max(64))?;
            record.val_loss = Some(vl);
            record.val_accuracy = Some(va);
            if best.as_ref().is_none_or(|(b, _, _)| vl < *b) {
                best = Some((vl, model.store().clone(), model.norms().to_vec()));
                history.best_epoch = Some(epoch);
                since_best = 0;
            } else {
                since_best += 1;
                stop = since_best >= cfg.patience;
            }
        }
        log::info!(
            "epoch {epoch}: loss {:.4} acc {:.3}{}",
            record.loss,
            record.accuracy,
            record
                .val_loss
                .map_or(String::new(), |v| format!(" val_loss {v:.4} val_acc {:.3}", record.val_accuracy.unwrap_or(0.0)))
        );
        history.epochs.push(record);
        if cfg.stop_at_train_accuracy.is_some_and(|a| accuracy >= a) {
            stop = true;
        }
        if stop {
            history.stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    if let Some((_, store, norms)) = best {
        model.restore(store, norms);
    }
    Ok(history)
}
