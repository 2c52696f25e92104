use rand::Rng;

use super::config::{ModelConfig, Variant};
use super::context::{overlap_features, tokenize, ContextBundle, OverlapVector};
use crate::error::{Error, Result};
use crate::layers::{
    attention_pool_batch, batch_norm, dense, dropout, lstm_batch, window_mask, Activation,
    AttentionParams, BatchNormParams, BatchStats, Bound, ConvChannel, Dense, EmbeddingTable,
    LstmParams, Mode, ParamId, ParamStore, Vocabulary,
};
use crate::tensor::{Graph, Tensor, Var};

/// One (candidate, context) pair turned into vocabulary indices.
///
/// Padding slots still hold a valid index (the unknown row); the matching
/// `*_pad` flag marks them, and every window touching one is zeroed, so the
/// index stored there never reaches the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub candidate: Vec<usize>,
    pub candidate_pad: Vec<bool>,
    pub context: Vec<usize>,
    pub context_pad: Vec<bool>,
    pub overlap: Vec<f64>,
}

/// Result of a batched forward pass.
pub struct Forward {
    pub params: Bound,
    /// `B × 1` relatedness scores
    pub scores: Var,
    /// train-mode batch statistics per norm slot, applied after the step
    pub stats: Vec<(usize, BatchStats)>,
}

/// The fusion dual convolution-LSTM relatedness network.
#[derive(Debug, Clone, PartialEq)]
pub struct RelatednessModel {
    config: ModelConfig,
    vocab: Vocabulary,
    store: ParamStore,
    embedding: ParamId,
    candidate: ConvChannel,
    sub_a: Vec<ConvChannel>,
    sub_b: Vec<ConvChannel>,
    lstm: LstmParams,
    attention: Option<AttentionParams>,
    overlap: Dense,
    /// candidate channel, then sub-network A, then B; empty without BN after conv
    conv_norms: Vec<usize>,
    merge_norm: usize,
    mlp: Vec<(Dense, usize)>,
    head: Dense,
    norms: Vec<BatchNormParams>,
}

impl RelatednessModel {
    pub fn new(config: ModelConfig, emb: &EmbeddingTable, rng: &mut impl Rng) -> Result<Self> {
        if emb.dim() != config.embedding_dim {
            return Err(Error::EmbeddingDim {
                expected: config.embedding_dim,
                found: emb.dim(),
            });
        }
        Self::build(config, emb.vocab().clone(), emb.matrix().clone(), rng)
    }

    /// Skeleton with a zero embedding matrix; the caller overwrites every
    /// parameter afterwards.
    pub(crate) fn skeleton(config: ModelConfig, vocab: Vocabulary) -> Result<Self> {
        let matrix = Tensor::zeros(&[vocab.len(), config.embedding_dim]);
        Self::build(config, vocab, matrix, &mut crate::seed::rng_for(0, "skeleton"))
    }

    fn build(config: ModelConfig, vocab: Vocabulary, matrix: Tensor, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let (d, j, h) = (c.embedding_dim, c.kernels_per_channel, c.lstm_hidden);
        let mut store = ParamStore::new();
        let embedding = store.add("embedding", matrix);
        let candidate = ConvChannel::new(&mut store, "candidate", c.candidate_width, d, j, rng)?;
        let mut channels = |prefix: &str, store: &mut ParamStore| -> Result<Vec<ConvChannel>> {
            c.kernel_widths
                .iter()
                .enumerate()
                .map(|(i, &k)| ConvChannel::new(store, &format!("{prefix}.conv{i}"), k, d, j, rng))
                .collect()
        };
        let sub_a = channels("a", &mut store)?;
        let sub_b = channels("b", &mut store)?;
        let lstm = LstmParams::new(&mut store, "b.lstm", 4 * j, h, rng)?;
        let attention = match c.variant {
            Variant::Attention => Some(AttentionParams::new(&mut store, "b.attention", h, rng)?),
            Variant::Plain => None,
        };
        let overlap = Dense::new(
            &mut store,
            "overlap",
            OverlapVector::width(c.overlap_buckets),
            c.overlap_width,
            Activation::Relu,
            rng,
        )?;

        let mut norms = Vec::new();
        let mut add_norm = |store: &mut ParamStore, name: &str, n: usize| -> Result<usize> {
            let mut bn = BatchNormParams::new(store, name, n)?;
            bn.eps = c.bn_epsilon;
            norms.push(bn);
            Ok(norms.len() - 1)
        };
        let mut conv_norms = Vec::new();
        if c.bn_after_conv {
            conv_norms.push(add_norm(&mut store, "candidate.bn", j)?);
            for prefix in ["a", "b"] {
                for i in 0..c.kernel_widths.len() {
                    conv_norms.push(add_norm(&mut store, &format!("{prefix}.conv{i}.bn"), j)?);
                }
            }
        }
        let merge_norm = add_norm(&mut store, "merge.bn", c.merge_width())?;
        let mut mlp = Vec::new();
        let mut width = c.merge_width();
        for (i, &n) in c.mlp_sizes.iter().enumerate() {
            let layer = Dense::new(&mut store, &format!("mlp{i}"), width, n, Activation::Relu, rng)?;
            let bn = add_norm(&mut store, &format!("mlp{i}.bn"), n)?;
            mlp.push((layer, bn));
            width = n;
        }
        let head = Dense::new(&mut store, "head", width, 1, Activation::Sigmoid, rng)?;
        Ok(Self {
            config,
            vocab,
            store,
            embedding,
            candidate,
            sub_a,
            sub_b,
            lstm,
            attention,
            overlap,
            conv_norms,
            merge_norm,
            mlp,
            head,
            norms,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn norms(&self) -> &[BatchNormParams] {
        &self.norms
    }

    pub(crate) fn norms_mut(&mut self) -> &mut [BatchNormParams] {
        &mut self.norms
    }

    pub fn has_attention(&self) -> bool {
        self.attention.is_some()
    }

    pub fn has_conv_norms(&self) -> bool {
        !self.conv_norms.is_empty()
    }

    pub fn subnetwork_widths(&self) -> (Vec<usize>, Vec<usize>) {
        (
            self.sub_a.iter().map(|c| c.width).collect(),
            self.sub_b.iter().map(|c| c.width).collect(),
        )
    }

    pub fn embedding_param(&self) -> ParamId {
        self.embedding
    }

    pub fn num_parameters(&self) -> usize {
        self.store.size()
    }

    pub fn freeze_embeddings(&mut self, frozen: bool) {
        self.store.set_trainable(self.embedding, !frozen);
    }

    /// Digest of the vocabulary and embedding width, stored in model files.
    pub fn fingerprint(&self) -> u64 {
        self.vocab.fingerprint(self.config.embedding_dim)
    }

    /// Errors unless `emb` has the width the model was built for.
    pub fn check_embeddings(&self, emb: &EmbeddingTable) -> Result<()> {
        if emb.dim() != self.config.embedding_dim {
            return Err(Error::EmbeddingDim {
                expected: self.config.embedding_dim,
                found: emb.dim(),
            });
        }
        Ok(())
    }

    /// Replaces the parameters and norm statistics with a snapshot taken
    /// from this model.
    pub fn restore(&mut self, store: ParamStore, norms: Vec<BatchNormParams>) {
        debug_assert_eq!(store.len(), self.store.len());
        self.store = store;
        self.norms = norms;
    }

    pub fn apply_stats(&mut self, stats: &[(usize, BatchStats)]) {
        for (slot, s) in stats {
            self.norms[*slot].update(s);
        }
    }

    pub fn encode(&self, candidate: &str, ctx: &ContextBundle) -> Result<Encoded> {
        let c = &self.config;
        let mut cand = tokenize(candidate);
        if cand.is_empty() {
            return Err(Error::Empty("candidate word"));
        }
        if cand.len() > c.max_candidate_len {
            log::warn!(
                "candidate `{candidate}` has {} tokens; truncated to {}",
                cand.len(),
                c.max_candidate_len
            );
            cand.truncate(c.max_candidate_len);
        }
        let mut seq = ctx.sequence();
        if seq.len() > c.max_context_len {
            log::debug!("context of {} tokens truncated to {}", seq.len(), c.max_context_len);
            seq.truncate(c.max_context_len);
        }
        let (candidate, candidate_pad) = self.pad(&cand, c.max_candidate_len);
        let (context, context_pad) = self.pad(&seq, c.max_context_len);
        Ok(Encoded {
            candidate,
            candidate_pad,
            context,
            context_pad,
            overlap: overlap_features(&cand.join(" "), ctx, c.overlap_buckets).features(),
        })
    }

    fn pad(&self, tokens: &[String], len: usize) -> (Vec<usize>, Vec<bool>) {
        let unk = self.vocab.unk_index();
        let idx = (0..len)
            .map(|i| tokens.get(i).map_or(unk, |t| self.vocab.index_of(t)))
            .collect();
        let pad = (0..len).map(|i| i >= tokens.len()).collect();
        (idx, pad)
    }

    /// Binds the parameter store to `g` and runs the network on `batch`.
    pub fn forward<'p>(
        &'p self,
        g: &mut Graph<'p>,
        batch: &[Encoded],
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<Forward> {
        let params = self.store.bind(g);
        let (scores, stats) = self.forward_with(g, &params, batch, mode, rng)?;
        Ok(Forward {
            params,
            scores,
            stats,
        })
    }

    /// Forward pass over parameter handles supplied by the caller, in
    /// [`ParamStore`] order.
    pub fn forward_with(
        &self,
        g: &mut Graph<'_>,
        p: &Bound,
        batch: &[Encoded],
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<(Var, Vec<(usize, BatchStats)>)> {
        if batch.is_empty() {
            return Err(Error::Empty("forward batch"));
        }
        let c = &self.config;
        let b = batch.len();
        let mut stats = Vec::new();
        let table = p[self.embedding];

        let cand_idx: Vec<Option<usize>> = batch.iter().flat_map(|e| e.candidate.iter().map(|&i| Some(i))).collect();
        let cand_pad: Vec<bool> = batch.iter().flat_map(|e| e.candidate_pad.iter().copied()).collect();
        let ctx_idx: Vec<Option<usize>> = batch.iter().flat_map(|e| e.context.iter().map(|&i| Some(i))).collect();
        let ctx_pad: Vec<bool> = batch.iter().flat_map(|e| e.context_pad.iter().copied()).collect();
        if cand_idx.len() != b * c.max_candidate_len || ctx_idx.len() != b * c.max_context_len {
            return Err(Error::shape(
                "encoded batch",
                &[cand_idx.len(), ctx_idx.len()],
                &[b * c.max_candidate_len, b * c.max_context_len],
            ));
        }
        let cand_x = g.gather_rows(table, &cand_idx)?;
        let ctx_x = g.gather_rows(table, &ctx_idx)?;

        let norm_slot = |i: usize| self.conv_norms.get(i).copied();
        let cand_map = self.conv(g, p, cand_x, &cand_pad, c.max_candidate_len, &self.candidate, norm_slot(0), mode, &mut stats)?;
        let cand_feat = g.reshape(cand_map, &[b, g.value(cand_map).len() / b])?;

        let mut a_feats = Vec::with_capacity(4);
        for (i, ch) in self.sub_a.iter().enumerate() {
            let m = self.conv(g, p, ctx_x, &ctx_pad, c.max_context_len, ch, norm_slot(1 + i), mode, &mut stats)?;
            a_feats.push(g.reshape(m, &[b, g.value(m).len() / b])?);
        }

        let mut b_maps = Vec::with_capacity(4);
        for (i, ch) in self.sub_b.iter().enumerate() {
            let slot = norm_slot(1 + self.sub_a.len() + i);
            b_maps.push(self.conv(g, p, ctx_x, &ctx_pad, c.max_context_len, ch, slot, mode, &mut stats)?);
        }
        let widest = *c.kernel_widths.iter().max().expect("four widths");
        let steps = c.max_context_len - widest + 1;
        let mut step_inputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut cols = Vec::with_capacity(4);
            for (&m, ch) in b_maps.iter().zip(&self.sub_b) {
                let len = c.max_context_len - ch.width + 1;
                let rows: Vec<Option<usize>> = (0..b).map(|r| Some(r * len + t)).collect();
                cols.push(g.gather_rows(m, &rows)?);
            }
            step_inputs.push(g.concat_cols(&cols)?);
        }
        let states = lstm_batch(g, &step_inputs, &self.lstm, p)?;
        let b_feat = match &self.attention {
            Some(att) => attention_pool_batch(g, &states, att, p)?.context,
            None => *states.last().expect("at least one step"),
        };

        let ov_in: Vec<f64> = batch.iter().flat_map(|e| e.overlap.iter().copied()).collect();
        let ov_in = g.constant(Tensor::matrix(b, OverlapVector::width(c.overlap_buckets), ov_in)?);
        let ov_feat = dense(g, ov_in, &self.overlap, p)?;

        let mut parts = a_feats;
        parts.extend([b_feat, cand_feat, ov_feat]);
        let merged = g.concat_cols(&parts)?;
        let mut x = self.norm(g, p, merged, self.merge_norm, mode, &mut stats)?;
        for (layer, slot) in &self.mlp {
            x = dense(g, x, layer, p)?;
            x = self.norm(g, p, x, *slot, mode, &mut stats)?;
            x = dropout(g, x, c.dropout, mode, rng)?;
        }
        let scores = dense(g, x, &self.head, p)?;
        Ok((scores, stats))
    }

    /// Masked convolution over a stack of equal-length sequences, with batch
    /// norm when `slot` is set. Windows touching padding stay exactly zero.
    #[allow(clippy::too_many_arguments)]
    fn conv(
        &self,
        g: &mut Graph<'_>,
        p: &Bound,
        x: Var,
        pad: &[bool],
        seq_len: usize,
        ch: &ConvChannel,
        slot: Option<usize>,
        mode: Mode,
        stats: &mut Vec<(usize, BatchStats)>,
    ) -> Result<Var> {
        let windows = g.unfold_blocks(x, seq_len, ch.width)?;
        let pre = g.matmul(windows, p[ch.kernel])?;
        let pre = g.add_bias(pre, p[ch.bias])?;
        let mut out = g.relu(pre);
        let keep: Vec<bool> = pad.chunks(seq_len).flat_map(|s| window_mask(s, ch.width)).collect();
        let factors: Vec<f64> = keep
            .iter()
            .flat_map(|&k| std::iter::repeat_n(if k { 1.0 } else { 0.0 }, ch.kernels))
            .collect();
        let all_kept = keep.iter().all(|&k| k);
        if !all_kept {
            out = g.mul_const(out, factors.clone())?;
        }
        if let Some(slot) = slot {
            out = self.norm(g, p, out, slot, mode, stats)?;
            if !all_kept {
                out = g.mul_const(out, factors)?;
            }
        }
        Ok(out)
    }

    fn norm(
        &self,
        g: &mut Graph<'_>,
        p: &Bound,
        x: Var,
        slot: usize,
        mode: Mode,
        stats: &mut Vec<(usize, BatchStats)>,
    ) -> Result<Var> {
        let (y, s) = batch_norm(g, x, &self.norms[slot], mode, p)?;
        if let Some(s) = s {
            stats.push((slot, s));
        }
        Ok(y)
    }

    /// Inference-mode scores for many pairs at once.
    pub fn score_encoded(&self, batch: &[Encoded]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let mut rng = crate::seed::rng_for(0, "infer");
        let out = self.forward(&mut g, batch, Mode::Infer, &mut rng)?;
        Ok(g.value(out.scores).data().to_vec())
    }

    pub fn score_batch(&self, pairs: &[(&str, &ContextBundle)]) -> Result<Vec<f64>> {
        let encoded = pairs
            .iter()
            .map(|(w, ctx)| self.encode(w, ctx))
            .collect::<Result<Vec<_>>>()?;
        self.score_encoded(&encoded)
    }

    /// Relatedness of `candidate` to `ctx`, in (0, 1).
    pub fn score(&self, candidate: &str, ctx: &ContextBundle) -> Result<f64> {
        Ok(self.score_batch(&[(candidate, ctx)])?[0])
    }
}
