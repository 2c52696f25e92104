//! Layer invariants measured on random inputs. Each function returns the
//! quantity the property bounds, so proptests and the acceptance harness
//! apply the same checks.

use ctxrank::layers::{
    attention_pool, batch_norm, dropout, masked_conv, AttentionParams, BatchNormParams, ConvChannel, Mode,
    ParamStore,
};
use ctxrank::seed::rng_for;
use ctxrank::tensor::{Graph, Tensor};
use rand::Rng;

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::matrix(rows, cols, data).expect("positive extents")
}

/// Output rows of a width-`k` channel over `s` tokens.
pub fn conv_rows(s: usize, k: usize, d: usize, seed: u64) -> usize {
    let mut rng = rng_for(seed, "conv");
    let mut store = ParamStore::new();
    let ch = ConvChannel::new(&mut store, "c", k, d, 3, &mut rng).expect("channel");
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    let x = g.constant(random_matrix(s, d, 1.0, &mut rng));
    let y = masked_conv(&mut g, x, &vec![false; s], &ch, &p).expect("conv");
    let rows = g.value(y).rows();
    assert_eq!(g.value(y).cols(), 3);
    rows
}

/// Rewrites every masked row of the input and reports whether the output
/// stayed bit-identical and every window touching a masked row is zero.
pub fn masked_rows_inert(s: usize, k: usize, d: usize, masked: &[bool], seed: u64) -> bool {
    let mut rng = rng_for(seed, "mask");
    let mut store = ParamStore::new();
    let ch = ConvChannel::new(&mut store, "c", k, d, 4, &mut rng).expect("channel");
    let x = random_matrix(s, d, 1.0, &mut rng);
    let mut altered = x.clone();
    for (r, &m) in masked.iter().enumerate() {
        if m {
            for c in 0..d {
                altered.data_mut()[r * d + c] = rng.random_range(-50.0..50.0);
            }
        }
    }
    let run = |input: &Tensor| {
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let x = g.constant(input.clone());
        let y = masked_conv(&mut g, x, masked, &ch, &p).expect("conv");
        g.value(y).data().to_vec()
    };
    let (a, b) = (run(&x), run(&altered));
    let same = a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits());
    let zeroed = (0..s + 1 - k).all(|w| {
        let touches = masked[w..w + k].iter().any(|&m| m);
        !touches || a[w * 4..(w + 1) * 4].iter().all(|&v| v == 0.0)
    });
    same && zeroed
}

/// `(|Σα − 1|, max |c − c_perm|)` for attention over `t` random states with
/// weights scaled up so the softmax is far from uniform.
pub fn attention_deviation(t: usize, h: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng_for(seed, "att");
    let mut store = ParamStore::new();
    let att = AttentionParams::new(&mut store, "a", h, &mut rng).expect("attention");
    for tensor in store.tensors_mut() {
        tensor.data_mut().iter_mut().for_each(|v| *v *= 25.0);
    }
    let states = random_matrix(t, h, 2.0, &mut rng);
    let mut order: Vec<usize> = (0..t).collect();
    order.reverse();
    order.rotate_left(t / 3);
    let mut permuted = Vec::with_capacity(t * h);
    for &r in &order {
        permuted.extend_from_slice(&states.data()[r * h..(r + 1) * h]);
    }
    let permuted = Tensor::matrix(t, h, permuted).expect("same shape");
    let pool = |s: &Tensor| {
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let x = g.constant(s.clone());
        let out = attention_pool(&mut g, x, &att, &p).expect("pool");
        (g.value(out.context).data().to_vec(), g.value(out.weights).data().to_vec())
    };
    let (c, w) = pool(&states);
    let (cp, _) = pool(&permuted);
    let sum_err = (w.iter().sum::<f64>() - 1.0).abs();
    let perm_err = c.iter().zip(&cp).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    (sum_err, perm_err)
}

/// Largest deviation of a per-feature mean from 0 or variance from 1 after
/// train-mode normalization with unit scale, zero shift and ε = 0. Returns
/// `None` when a feature of the random batch is too flat to normalize.
pub fn batch_norm_deviation(rows: usize, features: usize, seed: u64) -> Option<f64> {
    let mut rng = rng_for(seed, "bn");
    let mut store = ParamStore::new();
    let mut bn = BatchNormParams::new(&mut store, "bn", features).expect("norm");
    bn.eps = 0.0;
    let shift: Vec<f64> = (0..features).map(|_| rng.random_range(-20.0..20.0)).collect();
    let spread: Vec<f64> = (0..features).map(|_| rng.random_range(0.1..10.0)).collect();
    let data = (0..rows * features)
        .map(|i| shift[i % features] + spread[i % features] * rng.random_range(-1.0..1.0))
        .collect();
    let x = Tensor::matrix(rows, features, data).expect("positive extents");
    for f in 0..features {
        let col: Vec<f64> = (0..rows).map(|r| x.at(r, f)).collect();
        let mean = col.iter().sum::<f64>() / rows as f64;
        if col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (rows as f64) < 1e-4 {
            return None;
        }
    }
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    let xv = g.constant(x);
    let (y, _) = batch_norm(&mut g, xv, &bn, Mode::Train, &p).expect("norm");
    let y = g.value(y);
    let mut worst: f64 = 0.0;
    for f in 0..features {
        let col: Vec<f64> = (0..rows).map(|r| y.at(r, f)).collect();
        let mean = col.iter().sum::<f64>() / rows as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64;
        worst = worst.max(mean.abs()).max((var - 1.0).abs());
    }
    Some(worst)
}

/// Relative deviation of the mean of `n` dropped-out ones from 1.
pub fn dropout_mean_deviation(rate: f64, n: usize, seed: u64) -> f64 {
    let mut rng = rng_for(seed, "dropout");
    let mut g = Graph::new();
    let x = g.constant(Tensor::row(vec![1.0; n]).expect("non-empty"));
    let y = dropout(&mut g, x, rate, Mode::Train, &mut rng).expect("rate in range");
    let mean = g.value(y).data().iter().sum::<f64>() / n as f64;
    (mean - 1.0).abs()
}
