use rand::Rng;

use super::params::{uniform, Bound, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

pub const INIT_SCALE: f64 = 0.08;

/// Weights of a single-layer LSTM. The four gate blocks are packed
/// column-wise in the order input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input: usize,
    pub hidden: usize,
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub bias: ParamId,
}

impl LstmParams {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(Error::Config(format!("lstm `{name}` needs positive sizes")));
        }
        let w_x = store.add(format!("{name}.w_x"), uniform(input, 4 * hidden, INIT_SCALE, rng));
        let w_h = store.add(format!("{name}.w_h"), uniform(hidden, 4 * hidden, INIT_SCALE, rng));
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].fill(1.0);
        let bias = store.add(format!("{name}.bias"), Tensor::matrix(1, 4 * hidden, b)?);
        Ok(Self {
            input,
            hidden,
            w_x,
            w_h,
            bias,
        })
    }
}

/// Runs the recurrence over the rows of `seq` (`T × input`) from zero state
/// and returns every hidden state `h_1 … h_T`, each `1 × H`.
pub fn lstm_forward(g: &mut Graph<'_>, seq: Var, lstm: &LstmParams, p: &Bound) -> Result<Vec<Var>> {
    let steps = g.value(seq).rows();
    if g.value(seq).cols() != lstm.input {
        return Err(Error::shape("lstm input", g.shape(seq), &[steps, lstm.input]));
    }
    // input projections for all steps in one product
    let xw = g.matmul(seq, p[lstm.w_x])?;
    let xw = g.add_bias(xw, p[lstm.bias])?;
    recur(g, xw, steps, 1, lstm, p)
}

/// Batched recurrence: `inputs[t]` holds step `t` of every sequence
/// (`B × input`). Returns the states of each step, each `B × H`.
pub fn lstm_batch(g: &mut Graph<'_>, inputs: &[Var], lstm: &LstmParams, p: &Bound) -> Result<Vec<Var>> {
    let first = *inputs.first().ok_or(Error::Empty("lstm_batch"))?;
    let batch = g.value(first).rows();
    for &x in inputs {
        if g.value(x).rows() != batch || g.value(x).cols() != lstm.input {
            return Err(Error::shape("lstm input", g.shape(x), &[batch, lstm.input]));
        }
    }
    let stacked = g.concat_rows(inputs)?;
    let xw = g.matmul(stacked, p[lstm.w_x])?;
    let xw = g.add_bias(xw, p[lstm.bias])?;
    recur(g, xw, inputs.len(), batch, lstm, p)
}

/// `xw` holds the projected inputs, step-major: rows `t·B … t·B + B − 1` are step `t`.
fn recur(g: &mut Graph<'_>, xw: Var, steps: usize, batch: usize, lstm: &LstmParams, p: &Bound) -> Result<Vec<Var>> {
    let h = lstm.hidden;
    let mut states = Vec::with_capacity(steps);
    let mut cell: Option<Var> = None;
    let mut prev: Option<Var> = None;
    for t in 0..steps {
        let mut z = g.slice_rows(xw, t * batch, batch)?;
        if let Some(hp) = prev {
            let hw = g.matmul(hp, p[lstm.w_h])?;
            z = g.add(z, hw)?;
        }
        let i_gate = g.slice_cols(z, 0, h)?;
        let i_gate = g.sigmoid(i_gate);
        let f_gate = g.slice_cols(z, h, h)?;
        let f_gate = g.sigmoid(f_gate);
        let cand = g.slice_cols(z, 2 * h, h)?;
        let cand = g.tanh(cand);
        let o_gate = g.slice_cols(z, 3 * h, h)?;
        let o_gate = g.sigmoid(o_gate);

        let write = g.mul(i_gate, cand)?;
        let c = match cell {
            Some(c_prev) => {
                let keep = g.mul(f_gate, c_prev)?;
                g.add(keep, write)?
            }
            None => write,
        };
        let squashed = g.tanh(c);
        let h_t = g.mul(o_gate, squashed)?;
        states.push(h_t);
        cell = Some(c);
        prev = Some(h_t);
    }
    if states.is_empty() {
        return Err(Error::Empty("lstm_forward"));
    }
    Ok(states)
}
