//! Finite-difference verification of every differentiable operation, layer
//! and the two full relatedness networks.
//!
//! Each check draws random small shapes from a named seed, reduces the output
//! to a scalar with fixed random weights (a plain sum would hide, e.g., every
//! softmax gradient) and compares autodiff against central differences.

use rand::Rng;

use crate::error::Result;
use crate::layers::{
    attention_pool, attention_pool_batch, batch_norm, conv_channel, dense, dropout, lstm_batch,
    lstm_forward, masked_conv, Activation, AttentionParams, BatchNormParams, Bound, ConvChannel,
    Dense, EmbeddingTable, LstmParams, Mode, ParamStore,
};
use crate::relnet::{ContextBundle, Label, ModelConfig, RelatednessModel, Variant};
use crate::seed::{rng_for, SeededRng};
use crate::tensor::{finite_diff_check_many, finite_diff_check_steps, GradCheck, Graph, Tensor, Var};

pub const TOLERANCE: f64 = 1e-3;
/// Step for the single operations and layers.
pub const LAYER_EPS: f64 = 1e-5;
/// Steps for the full networks. Their loss sums thousands of terms, so a
/// small first step would drown the smallest gradients in last-bit rounding
/// noise; the smaller ones are fallbacks for entries whose stencil crossed a
/// ReLU kink.
pub const MODEL_STEPS: [f64; 3] = [3e-5, 5e-6, 1e-6];
/// Entries sampled per parameter tensor in full-network checks after the
/// first seed, which checks every entry.
pub const MODEL_SAMPLES: usize = 12;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub seed: u64,
    pub check: GradCheck,
}

impl CheckResult {
    pub fn passes(&self) -> bool {
        self.check.passes(TOLERANCE)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SuiteReport {
    pub results: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passes(&self) -> bool {
        self.results.iter().all(CheckResult::passes)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.results.iter().filter(|r| !r.passes())
    }

    pub fn max_error(&self) -> f64 {
        self.results.iter().map(|r| r.check.max_rel_error).fold(0.0, f64::max)
    }

    /// Worst result per check name, in suite order.
    pub fn worst_by_name(&self) -> Vec<&CheckResult> {
        let mut out: Vec<&CheckResult> = Vec::new();
        for r in &self.results {
            match out.iter_mut().find(|w| w.name == r.name) {
                Some(w) if r.check.max_rel_error > w.check.max_rel_error => *w = r,
                Some(_) => {}
                None => out.push(r),
            }
        }
        out
    }
}

type Check = fn(u64) -> Result<GradCheck>;

pub const OP_CHECKS: &[(&str, Check)] = &[
    ("relu", check_relu),
    ("tanh", check_tanh),
    ("sigmoid", check_sigmoid),
    ("matmul", check_matmul),
    ("add_bias", check_add_bias),
    ("add_sub_mul", check_elementwise),
    ("softmax", check_softmax),
    ("softmax_rows", check_softmax_rows),
    ("sum_mean", check_reductions),
    ("concat_slice", check_concat_slice),
    ("reshape_transpose", check_reshape_transpose),
    ("gather", check_gather),
    ("unfold", check_unfold),
    ("unfold_blocks", check_unfold_blocks),
    ("batch_norm_train", check_bn_train),
    ("batch_norm_frozen", check_bn_frozen),
    ("bce", check_bce),
];

pub const LAYER_CHECKS: &[(&str, Check)] = &[
    ("conv_channel", check_conv),
    ("masked_conv", check_masked_conv),
    ("lstm", check_lstm),
    ("lstm_batch", check_lstm_batch),
    ("attention", check_attention),
    ("attention_batch", check_attention_batch),
    ("batch_norm_layer", check_bn_layer),
    ("dense", check_dense),
    ("bce_sigmoid_dense", check_bce_sigmoid_dense),
    ("dropout", check_dropout),
];

/// Runs every check for `count` consecutive seeds starting at `seed`.
pub fn run_suite(seed: u64, count: usize) -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    for s in seed..seed + count as u64 {
        for (name, f) in OP_CHECKS.iter().chain(LAYER_CHECKS) {
            report.results.push(CheckResult {
                name: name.to_string(),
                seed: s,
                check: f(s)?,
            });
        }
        for v in [Variant::Plain, Variant::Attention] {
            let full = s == seed;
            report.results.push(CheckResult {
                name: format!("model {v}"),
                seed: s,
                check: check_model(v, s, !full)?,
            });
        }
    }
    Ok(report)
}

fn rng(seed: u64, name: &str) -> SeededRng {
    rng_for(seed, &format!("gradcheck.{name}"))
}

fn random(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::matrix(rows, cols, data).expect("positive extents")
}

/// Entries bounded away from zero, so ReLU kinks stay outside the stencil.
fn off_zero(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let v: f64 = rng.random_range(0.1..1.0);
            if rng.random::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::matrix(rows, cols, data).expect("positive extents")
}

fn dim(rng: &mut impl Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

/// `Σ w ⊙ y` with weights fixed by `rng`.
fn weigh(g: &mut Graph<'_>, y: Var, w: &[f64]) -> Result<Var> {
    let z = g.mul_const(y, w[..g.value(y).len()].to_vec())?;
    Ok(g.sum(z))
}

fn weights(rng: &mut impl Rng) -> Vec<f64> {
    (0..4096).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn unary_check(seed: u64, name: &str, op: fn(&mut Graph<'_>, Var) -> Var) -> Result<GradCheck> {
    let mut r = rng(seed, name);
    let (m, n) = (dim(&mut r, 1, 4), dim(&mut r, 1, 5));
    let x = off_zero(&mut r, m, n);
    let w = weights(&mut r);
    finite_diff_check_many(
        |g, v| {
            let y = op(g, v[0]);
            weigh(g, y, &w)
        },
        &[x],
        LAYER_EPS,
    )
}

fn check_relu(seed: u64) -> Result<GradCheck> {
    unary_check(seed, "relu", |g, x| g.relu(x))
}

fn check_tanh(seed: u64) -> Result<GradCheck> {
    unary_check(seed, "tanh", |g, x| g.tanh(x))
}

fn check_sigmoid(seed: u64) -> Result<GradCheck> {
    unary_check(seed, "sigmoid", |g, x| g.sigmoid(x))
}

fn check_matmul(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "matmul");
    let (m, k, n) = (dim(&mut r, 1, 4), dim(&mut r, 1, 5), dim(&mut r, 1, 4));
    let inputs = [random(&mut r, m, k), random(&mut r, k, n)];
    let w = weights(&mut r);
    finite_diff_check_many(
        |g, v| {
            let y = g.matmul(v[0], v[1])?;
            weigh(g, y, &w)
        },
        &inputs,
        LAYER_EPS,
    )
}

fn check_add_bias(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "add_bias");
    let (m, n) = (dim(&mut r, 1, 4), dim(&mut r, 1, 5));
    let inputs = [random(&mut r, m, n), random(&mut r, 1, n)];
    let w = weights(&mut r);
    finite_diff_check_many(
        |g, v| {
            let y = g.add_bias(v[0], v[1])?;
            weigh(g, y, &w)
        },
        &inputs,
        LAYER_EPS,
    )
}

fn check_elementwise(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "elementwise");
    let (m, n) = (dim(&mut r, 1, 4), dim(&mut r, 1, 5));
    let inputs = [random(&mut r, m, n), random(&mut r, m, n), random(&mut r, m, n)];
    let w = weights(&mut r);
    let c: f64 = r.random_range(-2.0..2.0);
    finite_diff_check_many(
        |g, v| {
            let a = g.add(v[0], v[1])?;
            let b = g.mul(a, v[2])?;
            let s = g.sub(b, v[0])?;
            let s = g.scale(s, c);
            weigh(g, s, &w)
        },
        &inputs,
        LAYER_EPS,
    )
}

fn check_softmax(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "softmax");
    let n = dim(&mut r, 1, 6);
    let x = random(&mut r, n, 1);
    let w = weights(&mut r);
    finite_diff_check_many(
        |g, v| {
            let y = g.softmax(v[0])?;
            weigh(g, y, &w)
        },
        &[x],
        LAYER_EPS,
    )
}

fn check_softmax_rows(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "softmax_rows");
    let (m, n) = (dim(&mut r, 1, 4), dim(&mut r, 1, 5));
    let x = random(&mut r, m, n);
    let w = weights(&mut r);
    finite_diff_check_many(
        |g, v| {
            let y = g.softmax_rows(v[0])?;
            weigh(g, y, &w)
        },
        &[x],
        LAYER_EPS,
    )
}

fn check_reductions(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "reductions");
    let (m, n) = (dim(&mut r, 1, 4), dim(&mut r, 1, 5));
    let x = random(&mut r, m, n);
    finite_diff_check_many(
        |g, v| {
            let sq = g.mul(v[0], v[0])?;
            let s = g.sum(sq);
            let mu = g.mean(v[0]);
            let p = g.mul(s, mu)?;
            g.add(p, mu)
        },
        &[x],
        LAYER_EPS,
    )
}

fn check_concat_slice(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "concat");
    let (m, n) = (dim(&mut r, 2, 4), dim(&mut r, 2, 4));
    let inputs = [random(&mut r, m, n), random(&mut r, m, n + 1), random(&mut r, 1, 2 * n + 1)];
    let w = weights(&mut r);
    finite_diff_check_many(
        |g, v| {
            let c = g.concat_cols(&[v[0], v[1]])?;
            let c = g.concat_rows(&[c, v[2]])?;
            let rows = g.slice_rows(c, 1, m)?;
            let cols = g.slice_cols(rows, 1, 2 * n - 1)?;
            let sq = g.mul(cols, cols)?;
            weigh(g, sq, &w)
        },
        &inputs,
        LAYER_EPS,
    )
}

fn check_reshape_transpose(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "reshape");
    let (m, n) = (dim(&mut r, 1, 4), dim(&mut r, 1, 4));
    let inputs = [random(&mut r, m, n), random(&mut r, m, n)];
    let w = weights(&mut r);
    finite_diff_check_many(
        |g, v| {
            let t = g.transpose(v[0])?;
            let t = g.reshape(t, &[m, n])?;
            let y = g.mul(t, v[1])?;
            weigh(g, y, &w)
        },
        &inputs,
        LAYER_EPS,
    )
}

fn check_gather(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "gather");
    let (v_rows, d) = (dim(&mut r, 2, 6), dim(&mut r, 1, 4));
    let table = random(&mut r, v_rows, d);
    let idx: Vec<Option<usize>> = (0..dim(&mut r, 1, 8))
        .map(|_| (r.random::<f64>() > 0.2).then(|| r.random_range(0..v_rows)))
        .collect();
    let w = weights(&mut r);
    finite_diff_check_many(
        |g, v| {
            let y = g.gather_rows(v[0], &idx)?;
            let y = g.tanh(y);
            weigh(g, y, &w)
        },
        &[table],
        LAYER_EPS,
    )
}

fn check_unfold(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "unfold");
    let (s, d) = (dim(&mut r, 3, 7), dim(&mut r, 1, 3));
    let k = dim(&mut r, 1, s);
    let x = random(&mut r, s, d);
    let w = weights(&mut r);
    finite_diff_check_many(
        |g, v| {
            let y = g.unfold(v[0], k)?;
            let y = g.tanh(y);
            weigh(g, y, &w)
        },
        &[x],
        LAYER_EPS,
    )
}

fn check_unfold_blocks(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "unfold_blocks");
    let (b, s, d) = (dim(&mut r, 1, 3), dim(&mut r, 3, 6), dim(&mut r, 1, 3));
    let k = dim(&mut r, 1, s);
    let x = random(&mut r, b * s, d);
    let w = weights(&mut r);
    finite_diff_check_many(
        |g, v| {
            let y = g.unfold_blocks(v[0], s, k)?;
            let y = g.tanh(y);
            weigh(g, y, &w)
        },
        &[x],
        LAYER_EPS,
    )
}

fn check_bn_train(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "bn_train");
    let (m, n) = (dim(&mut r, 3, 6), dim(&mut r, 1, 4));
    let inputs = [random(&mut r, m, n), random(&mut r, 1, n), random(&mut r, 1, n)];
    let w = weights(&mut r);
    finite_diff_check_many(
        |g, v| {
            let (y, _, _) = g.batch_norm_train(v[0], v[1], v[2], 1e-3)?;
            weigh(g, y, &w)
        },
        &inputs,
        LAYER_EPS,
    )
}

fn check_bn_frozen(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "bn_frozen");
    let (m, n) = (dim(&mut r, 1, 4), dim(&mut r, 1, 4));
    let inputs = [random(&mut r, m, n), random(&mut r, 1, n), random(&mut r, 1, n)];
    let mean: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let var: Vec<f64> = (0..n).map(|_| r.random_range(0.1..2.0)).collect();
    let w = weights(&mut r);
    finite_diff_check_many(
        |g, v| {
            let y = g.batch_norm_frozen(v[0], v[1], v[2], &mean, &var, 1e-3)?;
            weigh(g, y, &w)
        },
        &inputs,
        LAYER_EPS,
    )
}

fn check_bce(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "bce");
    let n = dim(&mut r, 1, 6);
    let p = Tensor::matrix(n, 1, (0..n).map(|_| r.random_range(0.05..0.95)).collect())?;
    let targets: Vec<f64> = (0..n).map(|_| r.random_range(0.0..=1.0)).collect();
    finite_diff_check_many(|g, v| g.bce(v[0], &targets), &[p], LAYER_EPS)
}

/// Checks a layer whose parameters live in `store`, plus an input tensor.
fn layer_check(
    store: &ParamStore,
    input: Tensor,
    f: impl Fn(&mut Graph<'_>, Var, &Bound) -> Result<Var>,
) -> Result<GradCheck> {
    let mut tensors = vec![input];
    tensors.extend(store.iter().map(|(_, _, t)| t.clone()));
    finite_diff_check_many(
        |g, v| {
            let bound = Bound::from_vars(v[1..].to_vec());
            f(g, v[0], &bound)
        },
        &tensors,
        LAYER_EPS,
    )
}

fn check_conv(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "conv");
    let (s, d, j) = (dim(&mut r, 3, 7), dim(&mut r, 1, 4), dim(&mut r, 1, 4));
    let k = dim(&mut r, 1, s.min(4));
    let mut store = ParamStore::new();
    let ch = ConvChannel::new(&mut store, "c", k, d, j, &mut r)?;
    let x = random(&mut r, s, d);
    let w = weights(&mut r);
    layer_check(&store, x, |g, x, p| {
        let y = conv_channel(g, x, &ch, p)?;
        weigh(g, y, &w)
    })
}

fn check_masked_conv(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "masked_conv");
    let (s, d, j) = (dim(&mut r, 4, 8), dim(&mut r, 1, 4), dim(&mut r, 1, 4));
    let k = dim(&mut r, 1, 3);
    let valid = dim(&mut r, k, s);
    let masked: Vec<bool> = (0..s).map(|i| i >= valid).collect();
    let mut store = ParamStore::new();
    let ch = ConvChannel::new(&mut store, "c", k, d, j, &mut r)?;
    let x = random(&mut r, s, d);
    let w = weights(&mut r);
    layer_check(&store, x, |g, x, p| {
        let y = masked_conv(g, x, &masked, &ch, p)?;
        weigh(g, y, &w)
    })
}

fn check_lstm(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "lstm");
    let (input, hidden) = (dim(&mut r, 1, 4), dim(&mut r, 1, 4));
    let mut store = ParamStore::new();
    let lstm = LstmParams::new(&mut store, "l", input, hidden, &mut r)?;
    let x = random(&mut r, 5, input);
    let w = weights(&mut r);
    layer_check(&store, x, |g, x, p| {
        let states = lstm_forward(g, x, &lstm, p)?;
        let all = g.concat_rows(&states)?;
        weigh(g, all, &w)
    })
}

fn check_lstm_batch(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "lstm_batch");
    let (input, hidden, batch) = (dim(&mut r, 1, 4), dim(&mut r, 1, 4), dim(&mut r, 1, 3));
    let mut store = ParamStore::new();
    let lstm = LstmParams::new(&mut store, "l", input, hidden, &mut r)?;
    let x = random(&mut r, 4 * batch, input);
    let w = weights(&mut r);
    layer_check(&store, x, |g, x, p| {
        let steps = (0..4)
            .map(|t| g.slice_rows(x, t * batch, batch))
            .collect::<Result<Vec<_>>>()?;
        let states = lstm_batch(g, &steps, &lstm, p)?;
        let all = g.concat_rows(&states)?;
        weigh(g, all, &w)
    })
}

fn check_attention(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "attention");
    let (t, h) = (dim(&mut r, 1, 6), dim(&mut r, 1, 5));
    let mut store = ParamStore::new();
    let att = AttentionParams::new(&mut store, "a", h, &mut r)?;
    // larger weights than the default init so the softmax is far from uniform
    for t in store.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v *= 10.0);
    }
    let x = random(&mut r, t, h);
    let w = weights(&mut r);
    layer_check(&store, x, |g, x, p| {
        let pooled = attention_pool(g, x, &att, p)?;
        weigh(g, pooled.context, &w)
    })
}

fn check_attention_batch(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "attention_batch");
    let (t, h, batch) = (dim(&mut r, 1, 5), dim(&mut r, 1, 4), dim(&mut r, 1, 3));
    let mut store = ParamStore::new();
    let att = AttentionParams::new(&mut store, "a", h, &mut r)?;
    for t in store.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v *= 10.0);
    }
    let x = random(&mut r, t * batch, h);
    let w = weights(&mut r);
    layer_check(&store, x, |g, x, p| {
        let steps = (0..t)
            .map(|i| g.slice_rows(x, i * batch, batch))
            .collect::<Result<Vec<_>>>()?;
        let pooled = attention_pool_batch(g, &steps, &att, p)?;
        weigh(g, pooled.context, &w)
    })
}

fn check_dense(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "dense");
    let (m, i, o) = (dim(&mut r, 1, 4), dim(&mut r, 1, 5), dim(&mut r, 1, 4));
    let act = [Activation::Linear, Activation::Tanh, Activation::Sigmoid][r.random_range(0..3)];
    let mut store = ParamStore::new();
    let layer = Dense::new(&mut store, "d", i, o, act, &mut r)?;
    let x = random(&mut r, m, i);
    let w = weights(&mut r);
    layer_check(&store, x, |g, x, p| {
        let y = dense(g, x, &layer, p)?;
        weigh(g, y, &w)
    })
}

fn check_bce_sigmoid_dense(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "bce_dense");
    let (m, i) = (dim(&mut r, 1, 6), dim(&mut r, 1, 5));
    let mut store = ParamStore::new();
    let layer = Dense::new(&mut store, "d", i, 1, Activation::Sigmoid, &mut r)?;
    let x = random(&mut r, m, i);
    let targets: Vec<f64> = (0..m).map(|_| f64::from(r.random_range(0..2u8))).collect();
    layer_check(&store, x, |g, x, p| {
        let y = dense(g, x, &layer, p)?;
        g.bce(y, &targets)
    })
}

fn check_dropout(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "dropout");
    let (m, n) = (dim(&mut r, 1, 4), dim(&mut r, 1, 5));
    let x = random(&mut r, m, n);
    let w = weights(&mut r);
    finite_diff_check_many(
        |g, v| {
            let mut mask_rng = rng(seed, "dropout.mask");
            let y = dropout(g, v[0], 0.5, Mode::Train, &mut mask_rng)?;
            let y = g.tanh(y);
            weigh(g, y, &w)
        },
        &[x],
        LAYER_EPS,
    )
}

/// Toy network, a six-item batch of distinct six-token contexts and single
/// token candidates, in train mode with a fixed dropout mask.
pub struct ModelFixture {
    pub model: RelatednessModel,
    pub batch: Vec<crate::relnet::Encoded>,
    pub targets: Vec<f64>,
    pub dropout_seed: u64,
}

pub fn model_fixture(variant: Variant, seed: u64) -> Result<ModelFixture> {
    let mut r = rng(seed, "model");
    let cfg = ModelConfig::toy(variant);
    let words: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
    let rows = words
        .iter()
        .map(|w| (w.clone(), (0..cfg.embedding_dim).map(|_| r.random_range(-1.0..1.0)).collect()))
        .collect();
    let emb = EmbeddingTable::from_rows(rows)?;
    let model = RelatednessModel::new(cfg, &emb, &mut r)?;
    let pick = |r: &mut SeededRng| words[r.random_range(0..words.len())].clone();
    let mut batch = Vec::new();
    let mut targets = Vec::new();
    for i in 0..6 {
        let caption: Vec<String> = (0..4).map(|_| pick(&mut r)).collect();
        let ctx = ContextBundle::new(
            vec![Label::new(&pick(&mut r), r.random_range(0.0..=1.0))?],
            vec![Label::new(&pick(&mut r), r.random_range(0.0..=1.0))?],
            &caption.join(" "),
        );
        batch.push(model.encode(&pick(&mut r), &ctx)?);
        targets.push((i % 2) as f64);
    }
    Ok(ModelFixture {
        model,
        batch,
        targets,
        dropout_seed: seed,
    })
}

impl ModelFixture {
    /// Mean BCE of the batch, built on caller-supplied parameter leaves.
    pub fn loss(&self, g: &mut Graph<'_>, params: &[Var]) -> Result<Var> {
        let bound = Bound::from_vars(params.to_vec());
        let mut drop = rng(self.dropout_seed, "model.dropout");
        let (scores, _) = self.model.forward_with(g, &bound, &self.batch, Mode::Train, &mut drop)?;
        g.bce(scores, &self.targets)
    }

    pub fn params(&self) -> Vec<Tensor> {
        self.model.store().iter().map(|(_, _, t)| t.clone()).collect()
    }
}

/// Gradient of the BCE loss of the full network w.r.t. every parameter
/// tensor. With `sampled`, only [`MODEL_SAMPLES`] random entries per tensor
/// are perturbed.
pub fn check_model(variant: Variant, seed: u64, sampled: bool) -> Result<GradCheck> {
    let fx = model_fixture(variant, seed)?;
    let params = fx.params();
    let mut r = rng(seed, "model.coords");
    let coords: Vec<Vec<usize>> = params
        .iter()
        .map(|t| {
            if sampled && t.len() > MODEL_SAMPLES {
                (0..MODEL_SAMPLES).map(|_| r.random_range(0..t.len())).collect()
            } else {
                (0..t.len()).collect()
            }
        })
        .collect();
    finite_diff_check_steps(|g, v| fx.loss(g, v), &params, &coords, &MODEL_STEPS)
}

fn check_bn_layer(seed: u64) -> Result<GradCheck> {
    let mut r = rng(seed, "bn_layer");
    let (m, n) = (dim(&mut r, 2, 6), dim(&mut r, 1, 4));
    let mut store = ParamStore::new();
    let bn = BatchNormParams::new(&mut store, "bn", n)?;
    let x = random(&mut r, m, n);
    let w = weights(&mut r);
    layer_check(&store, x, |g, x, p| {
        let (y, _) = batch_norm(g, x, &bn, Mode::Train, p)?;
        weigh(g, y, &w)
    })
}
