use std::borrow::Cow;

use super::{matmul_into, softmax_in_place, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`]. Only meaningful for the graph that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Relu,
    Tanh,
    Sigmoid,
}

impl Unary {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Unary::Relu => x.max(0.0),
            Unary::Tanh => x.tanh(),
            Unary::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    /// Derivative expressed through input `x` and output `y`.
    fn slope(self, x: f64, y: f64) -> f64 {
        match self {
            // subgradient at 0 is 0
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Tanh => 1.0 - y * y,
            Unary::Sigmoid => y * (1.0 - y),
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Unary(Var, Unary),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Vec<f64>),
    Scale(Var, f64),
    Softmax(Var),
    SoftmaxRows(Var),
    Sum(Var),
    Mean(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Reshape(Var),
    Transpose(Var),
    Gather(Var, Vec<Option<usize>>),
    Unfold(Var, usize),
    UnfoldBlocks {
        x: Var,
        block: usize,
        width: usize,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        // frozen statistics: the normalization does not depend on the batch
        frozen: bool,
    },
    Bce {
        p: Var,
        targets: Vec<f64>,
    },
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Lower clamp applied to predictions inside [`Graph::bce`].
pub const PROB_FLOOR: f64 = 1e-7;

/// Single-builder operation tape. Nodes are appended in evaluation order, so
/// the node list is already a topological order and `backward` is one reverse
/// sweep.
#[derive(Default)]
pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
    grads: Vec<Option<Vec<f64>>>,
    kinks: u64,
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            kinks: 0,
        }
    }

    /// Hash of which side of its kink every ReLU input and BCE clamp fell
    /// on. Two evaluations with equal signatures lie on the same smooth
    /// piece, so a finite difference between them is meaningful.
    pub fn kink_signature(&self) -> u64 {
        self.kinks
    }

    fn record_kinks(&mut self, sides: impl Iterator<Item = bool>) {
        for side in sides {
            self.kinks = (self.kinks ^ u64::from(side) ^ 0xcbf2_9ce4_8422_2325).wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        debug_assert!(value.shape().iter().product::<usize>() == value.len());
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Leaf that owns its value. Gradient tracking follows `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let rg = t.requires_grad();
        self.push(t, Op::Leaf, rg)
    }

    /// Leaf that borrows its value (model parameters) without copying.
    pub fn leaf_ref(&mut self, t: &'p Tensor) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
            requires_grad: t.requires_grad(),
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    pub fn unary(&mut self, x: Var, f: Unary) -> Var {
        if f == Unary::Relu {
            let sides: Vec<bool> = self.value(x).data().iter().map(|&v| v > 0.0).collect();
            self.record_kinks(sides.into_iter());
        }
        let out = self.value(x).map(|v| f.eval(v));
        let rg = self.needs(&[x]);
        self.push(out, Op::Unary(x, f), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Relu)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), rg))
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (m, n) = self.dims(x);
        if self.value(b).len() != n {
            return Err(Error::shape("add_bias", self.shape(x), self.shape(b)));
        }
        let bias = self.value(b).data();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(n) {
            for (o, bv) in row.iter_mut().zip(bias) {
                *o += bv;
            }
        }
        let rg = self.needs(&[x, b]);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::AddBias(x, b), rg))
    }

    fn zip(&self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "add", |x, y| x + y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "sub", |x, y| x - y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "mul", |x, y| x * y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// Elementwise product with a constant of the same length (masks, dropout).
    pub fn mul_const(&mut self, x: Var, c: Vec<f64>) -> Result<Var> {
        let t = self.value(x);
        if t.len() != c.len() {
            return Err(Error::shape("mul_const", t.shape(), &[c.len()]));
        }
        let data = t.data().iter().zip(&c).map(|(a, b)| a * b).collect();
        let out = Tensor::new(t.shape().to_vec(), data)?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::MulConst(x, c), rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v * c);
        let rg = self.needs(&[x]);
        self.push(out, Op::Scale(x, c), rg)
    }

    /// Softmax over all entries of `x`; the result keeps `x`'s shape.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.is_empty() {
            return Err(Error::Empty("softmax"));
        }
        let mut data = t.data().to_vec();
        softmax_in_place(&mut data);
        let out = Tensor::new(t.shape().to_vec(), data)?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::Softmax(x), rg))
    }

    /// Softmax applied to each row independently.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (_, n) = self.dims(x);
        let t = self.value(x);
        if t.is_empty() {
            return Err(Error::Empty("softmax_rows"));
        }
        let mut data = t.data().to_vec();
        data.chunks_mut(n).for_each(softmax_in_place);
        let out = Tensor::new(t.shape().to_vec(), data)?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::SoftmaxRows(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Empty("concat_cols"))?;
        let m = self.dims(first).0;
        let mut n = 0;
        for &p in parts {
            let (r, c) = self.dims(p);
            if r != m {
                return Err(Error::shape("concat_cols", self.shape(first), self.shape(p)));
            }
            n += c;
        }
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for &p in parts {
                let c = self.dims(p).1;
                out.extend_from_slice(&self.value(p).data()[i * c..(i + 1) * c]);
            }
        }
        let rg = self.needs(parts);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Empty("concat_rows"))?;
        let n = self.dims(first).1;
        let mut m = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.dims(p);
            if c != n {
                return Err(Error::shape("concat_rows", self.shape(first), self.shape(p)));
            }
            m += r;
            out.extend_from_slice(self.value(p).data());
        }
        let rg = self.needs(parts);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims(x);
        if len == 0 || start + len > m {
            return Err(Error::shape("slice_rows", self.shape(x), &[start, len]));
        }
        let out = self.value(x).data()[start * n..(start + len) * n].to_vec();
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::matrix(len, n, out)?, Op::SliceRows(x, start), rg))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims(x);
        if len == 0 || start + len > n {
            return Err(Error::shape("slice_cols", self.shape(x), &[start, len]));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + start + len]);
        }
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::matrix(m, len, out)?, Op::SliceCols(x, start), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x);
        if shape.iter().product::<usize>() != t.len() {
            return Err(Error::shape("reshape", t.shape(), shape));
        }
        let out = Tensor::new(shape.to_vec(), t.data().to_vec())?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.dims(x);
        let src = self.value(x).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::Transpose(x), rg))
    }

    /// Row lookup. `None` entries yield an all-zero row that carries no gradient.
    pub fn gather_rows(&mut self, table: Var, idx: &[Option<usize>]) -> Result<Var> {
        if idx.is_empty() {
            return Err(Error::Empty("gather_rows"));
        }
        let (v, d) = self.dims(table);
        let src = self.value(table).data();
        let mut out = vec![0.0; idx.len() * d];
        for (r, i) in idx.iter().enumerate() {
            if let Some(i) = *i {
                if i >= v {
                    return Err(Error::shape("gather_rows", self.shape(table), &[i]));
                }
                out[r * d..(r + 1) * d].copy_from_slice(&src[i * d..(i + 1) * d]);
            }
        }
        let rg = self.needs(&[table]);
        Ok(self.push(
            Tensor::matrix(idx.len(), d, out)?,
            Op::Gather(table, idx.to_vec()),
            rg,
        ))
    }

    /// Sliding windows of `width` consecutive rows, each flattened into one row:
    /// an `s×d` input becomes `(s−width+1)×(width·d)`.
    pub fn unfold(&mut self, x: Var, width: usize) -> Result<Var> {
        let (s, d) = self.dims(x);
        if width == 0 || s < width {
            return Err(Error::SequenceTooShort { len: s, width });
        }
        let rows = s - width + 1;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(rows * width * d);
        for i in 0..rows {
            out.extend_from_slice(&src[i * d..(i + width) * d]);
        }
        let rg = self.needs(&[x]);
        Ok(self.push(
            Tensor::matrix(rows, width * d, out)?,
            Op::Unfold(x, width),
            rg,
        ))
    }

    /// [`Graph::unfold`] applied separately to each consecutive block of
    /// `block` rows, so no window straddles two sequences of a batch. The
    /// windows of all blocks are stacked in block order.
    pub fn unfold_blocks(&mut self, x: Var, block: usize, width: usize) -> Result<Var> {
        let (s, d) = self.dims(x);
        if block == 0 || s % block != 0 {
            return Err(Error::shape("unfold_blocks", self.shape(x), &[block]));
        }
        if width == 0 || block < width {
            return Err(Error::SequenceTooShort { len: block, width });
        }
        let per = block - width + 1;
        let blocks = s / block;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(blocks * per * width * d);
        for b in 0..blocks {
            for i in 0..per {
                let start = (b * block + i) * d;
                out.extend_from_slice(&src[start..start + width * d]);
            }
        }
        let rg = self.needs(&[x]);
        Ok(self.push(
            Tensor::matrix(blocks * per, width * d, out)?,
            Op::UnfoldBlocks { x, block, width },
            rg,
        ))
    }

    /// Per-column normalization by batch statistics, then `γ·x̂ + β`.
    /// Returns the output and the (mean, biased variance) of each column.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let (m, n) = self.dims(x);
        if m < 2 {
            return Err(Error::BatchTooSmall(m));
        }
        self.check_affine(x, gamma, beta, n)?;
        let src = self.value(x).data();
        let mut mean = vec![0.0; n];
        for row in src.chunks(n) {
            for (mu, v) in mean.iter_mut().zip(row) {
                *mu += v;
            }
        }
        mean.iter_mut().for_each(|mu| *mu /= m as f64);
        let mut var = vec![0.0; n];
        for row in src.chunks(n) {
            for ((s, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - mu) * (v - mu);
            }
        }
        var.iter_mut().for_each(|s| *s /= m as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let out = self.normalize(x, gamma, beta, &mean, &inv_std, false)?;
        Ok((out, mean, var))
    }

    /// Batch norm with fixed statistics (inference mode).
    pub fn batch_norm_frozen(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        let n = self.dims(x).1;
        self.check_affine(x, gamma, beta, n)?;
        if mean.len() != n || var.len() != n {
            return Err(Error::shape("batch_norm", self.shape(x), &[mean.len()]));
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        self.normalize(x, gamma, beta, mean, &inv_std, true)
    }

    fn check_affine(&self, x: Var, gamma: Var, beta: Var, n: usize) -> Result<()> {
        for p in [gamma, beta] {
            if self.value(p).len() != n {
                return Err(Error::shape("batch_norm", self.shape(x), self.shape(p)));
            }
        }
        Ok(())
    }

    fn normalize(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        inv_std: &[f64],
        frozen: bool,
    ) -> Result<Var> {
        let (m, n) = self.dims(x);
        let src = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = Vec::with_capacity(m * n);
        let mut out = Vec::with_capacity(m * n);
        for row in src.chunks(n) {
            for j in 0..n {
                let h = (row[j] - mean[j]) * inv_std[j];
                xhat.push(h);
                out.push(g[j] * h + b[j]);
            }
        }
        let rg = self.needs(&[x, gamma, beta]);
        Ok(self.push(
            Tensor::matrix(m, n, out)?,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std: inv_std.to_vec(),
                frozen,
            },
            rg,
        ))
    }

    /// Mean binary cross-entropy of predictions `p` against `targets`.
    /// Predictions are clamped to `[PROB_FLOOR, 1 − PROB_FLOOR]`; clamped
    /// entries pass no gradient.
    pub fn bce(&mut self, p: Var, targets: &[f64]) -> Result<Var> {
        let t = self.value(p);
        if t.len() != targets.len() || targets.is_empty() {
            return Err(Error::shape("bce", t.shape(), &[targets.len()]));
        }
        let loss = bce_mean(t.data(), targets);
        let sides: Vec<bool> = t.data().iter().map(|&q| (PROB_FLOOR..=1.0 - PROB_FLOOR).contains(&q)).collect();
        self.record_kinks(sides.into_iter());
        let rg = self.needs(&[p]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                p,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Accumulated gradient of a node, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    /// Back-propagates a unit seed from a single-element output.
    pub fn backward_scalar(&mut self, output: Var) -> Result<()> {
        let seed = Tensor::new(self.shape(output).to_vec(), vec![1.0; self.value(output).len()])?;
        self.backward(output, &seed)
    }

    /// Reverse sweep from `output` seeded with `seed`. Gradients add onto
    /// whatever earlier calls accumulated; call [`Graph::zero_grad`] to reset.
    pub fn backward(&mut self, output: Var, seed: &Tensor) -> Result<()> {
        if seed.shape() != self.shape(output) {
            return Err(Error::shape("backward seed", seed.shape(), self.shape(output)));
        }
        let mut pass: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        pass[output.0] = Some(seed.data().to_vec());
        for i in (0..=output.0).rev() {
            let Some(g) = pass[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut pass);
            match &mut self.grads[i] {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, d)| *a += d),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], pass: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Unary(x, f) => {
                let xv = self.value(*x).data();
                self.acc(pass, *x, |dx| {
                    for k in 0..dx.len() {
                        dx[k] += g[k] * f.slope(xv[k], out[k]);
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                // dA = dC·Bᵀ
                self.acc(pass, *a, |da| {
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            da[r * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                // dB = Aᵀ·dC
                self.acc(pass, *b, |db| {
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let a_rp = av[r * k + p];
                            if a_rp == 0.0 {
                                continue;
                            }
                            for (d, gv) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d += a_rp * gv;
                            }
                        }
                    }
                });
            }
            Op::AddBias(x, b) => {
                let n = self.dims(*x).1;
                self.acc(pass, *x, |dx| add_into(dx, g));
                self.acc(pass, *b, |db| {
                    for row in g.chunks(n) {
                        add_into(db, row);
                    }
                });
            }
            Op::Add(a, b) => {
                self.acc(pass, *a, |d| add_into(d, g));
                self.acc(pass, *b, |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                self.acc(pass, *a, |d| add_into(d, g));
                self.acc(pass, *b, |d| d.iter_mut().zip(g).for_each(|(d, gv)| *d -= gv));
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                self.acc(pass, *a, |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] * bv[k];
                    }
                });
                self.acc(pass, *b, |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] * av[k];
                    }
                });
            }
            Op::MulConst(x, c) => {
                self.acc(pass, *x, |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] * c[k];
                    }
                });
            }
            Op::Scale(x, c) => {
                self.acc(pass, *x, |d| d.iter_mut().zip(g).for_each(|(d, gv)| *d += c * gv));
            }
            Op::Softmax(x) => {
                let dot: f64 = g.iter().zip(out).map(|(a, b)| a * b).sum();
                self.acc(pass, *x, |d| {
                    for k in 0..d.len() {
                        d[k] += out[k] * (g[k] - dot);
                    }
                });
            }
            Op::SoftmaxRows(x) => {
                let n = node.value.cols();
                self.acc(pass, *x, |d| {
                    for ((drow, grow), orow) in d.chunks_mut(n).zip(g.chunks(n)).zip(out.chunks(n)) {
                        let dot: f64 = grow.iter().zip(orow).map(|(a, b)| a * b).sum();
                        for k in 0..n {
                            drow[k] += orow[k] * (grow[k] - dot);
                        }
                    }
                });
            }
            Op::Sum(x) => {
                self.acc(pass, *x, |d| d.iter_mut().for_each(|v| *v += g[0]));
            }
            Op::Mean(x) => {
                let n = self.value(*x).len() as f64;
                self.acc(pass, *x, |d| d.iter_mut().for_each(|v| *v += g[0] / n));
            }
            Op::ConcatCols(parts) => {
                let (m, n) = (node.value.rows(), node.value.cols());
                let mut offset = 0;
                for &p in parts {
                    let c = self.dims(p).1;
                    self.acc(pass, p, |d| {
                        for r in 0..m {
                            add_into(&mut d[r * c..(r + 1) * c], &g[r * n + offset..r * n + offset + c]);
                        }
                    });
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    self.acc(pass, p, |d| add_into(d, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::SliceRows(x, start) => {
                let n = self.dims(*x).1;
                self.acc(pass, *x, |d| add_into(&mut d[start * n..start * n + g.len()], g));
            }
            Op::SliceCols(x, start) => {
                let n = self.dims(*x).1;
                let len = node.value.cols();
                self.acc(pass, *x, |d| {
                    for (r, grow) in g.chunks(len).enumerate() {
                        add_into(&mut d[r * n + start..r * n + start + len], grow);
                    }
                });
            }
            Op::Reshape(x) => {
                self.acc(pass, *x, |d| add_into(d, g));
            }
            Op::Transpose(x) => {
                let (m, n) = self.dims(*x);
                self.acc(pass, *x, |d| {
                    for r in 0..m {
                        for c in 0..n {
                            d[r * n + c] += g[c * m + r];
                        }
                    }
                });
            }
            Op::Gather(table, idx) => {
                let d_cols = self.dims(*table).1;
                self.acc(pass, *table, |d| {
                    for (r, i) in idx.iter().enumerate() {
                        if let Some(i) = *i {
                            add_into(
                                &mut d[i * d_cols..(i + 1) * d_cols],
                                &g[r * d_cols..(r + 1) * d_cols],
                            );
                        }
                    }
                });
            }
            Op::Unfold(x, width) => {
                let d_cols = self.dims(*x).1;
                let row = width * d_cols;
                self.acc(pass, *x, |d| {
                    for (i, grow) in g.chunks(row).enumerate() {
                        add_into(&mut d[i * d_cols..i * d_cols + row], grow);
                    }
                });
            }
            Op::UnfoldBlocks { x, block, width } => {
                let d_cols = self.dims(*x).1;
                let row = width * d_cols;
                let per = block - width + 1;
                self.acc(pass, *x, |d| {
                    for (w, grow) in g.chunks(row).enumerate() {
                        let start = ((w / per) * block + w % per) * d_cols;
                        add_into(&mut d[start..start + row], grow);
                    }
                });
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                frozen,
            } => {
                let n = inv_std.len();
                let m = g.len() / n;
                let gv = self.value(*gamma).data();
                let mut sum_g = vec![0.0; n];
                let mut sum_gx = vec![0.0; n];
                for (grow, hrow) in g.chunks(n).zip(xhat.chunks(n)) {
                    for j in 0..n {
                        sum_g[j] += grow[j];
                        sum_gx[j] += grow[j] * hrow[j];
                    }
                }
                self.acc(pass, *gamma, |d| add_into(d, &sum_gx));
                self.acc(pass, *beta, |d| add_into(d, &sum_g));
                self.acc(pass, *x, |d| {
                    let mf = m as f64;
                    for (r, (grow, hrow)) in g.chunks(n).zip(xhat.chunks(n)).enumerate() {
                        for j in 0..n {
                            let scale = gv[j] * inv_std[j];
                            d[r * n + j] += if *frozen {
                                scale * grow[j]
                            } else {
                                scale / mf * (mf * grow[j] - sum_g[j] - hrow[j] * sum_gx[j])
                            };
                        }
                    }
                });
            }
            Op::Bce { p, targets } => {
                let pv = self.value(*p).data();
                let n = targets.len() as f64;
                self.acc(pass, *p, |d| {
                    for k in 0..d.len() {
                        let q = pv[k];
                        if q <= PROB_FLOOR || q >= 1.0 - PROB_FLOOR {
                            continue;
                        }
                        let t = targets[k];
                        d[k] += g[0] * (-(t / q) + (1.0 - t) / (1.0 - q)) / n;
                    }
                });
            }
        }
    }

    fn acc(&self, pass: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let len = self.nodes[v.0].value.len();
        let slot = pass[v.0].get_or_insert_with(|| vec![0.0; len]);
        f(slot);
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn bce_mean(p: &[f64], targets: &[f64]) -> f64 {
    let n = targets.len() as f64;
    p.iter()
        .zip(targets)
        .map(|(&q, &t)| {
            let q = q.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            -(t * q.ln() + (1.0 - t) * (1.0 - q).ln())
        })
        .sum::<f64>()
        / n
}
