use rand::Rng;

use super::lstm::INIT_SCALE;
use super::params::{uniform, Bound, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Feed-forward attention scorer `e_t = tanh(h_t W_a) v_aᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub hidden: usize,
    /// `H × H`
    pub w_a: ParamId,
    /// `H × 1`, i.e. `v_a` already transposed
    pub v_a: ParamId,
}

impl AttentionParams {
    pub fn new(store: &mut ParamStore, name: &str, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::Config(format!("attention `{name}` needs a positive size")));
        }
        let w_a = store.add(format!("{name}.w_a"), uniform(hidden, hidden, INIT_SCALE, rng));
        let v_a = store.add(format!("{name}.v_a"), uniform(hidden, 1, INIT_SCALE, rng));
        Ok(Self { hidden, w_a, v_a })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Pooled {
    /// `1 × H` weighted average of the states
    pub context: Var,
    /// `T × 1` softmax weights
    pub weights: Var,
}

/// Collapses `states` (`T × H`) into one vector weighted by the softmax of
/// the per-step attention energies. Each energy depends only on its own
/// state, so the result ignores step order.
pub fn attention_pool(g: &mut Graph<'_>, states: Var, att: &AttentionParams, p: &Bound) -> Result<Pooled> {
    if g.value(states).cols() != att.hidden {
        return Err(Error::shape("attention", g.shape(states), &[att.hidden]));
    }
    let proj = g.matmul(states, p[att.w_a])?;
    let proj = g.tanh(proj);
    let energy = g.matmul(proj, p[att.v_a])?;
    let weights = g.softmax(energy)?;
    let row = g.transpose(weights)?;
    let context = g.matmul(row, states)?;
    Ok(Pooled { context, weights })
}

/// Attention pooling over a batch: `states[t]` holds step `t` of every
/// sequence (`B × H`). Returns the `B × H` contexts and `B × T` weights.
pub fn attention_pool_batch(
    g: &mut Graph<'_>,
    states: &[Var],
    att: &AttentionParams,
    p: &Bound,
) -> Result<Pooled> {
    let first = *states.first().ok_or(Error::Empty("attention_pool_batch"))?;
    let batch = g.value(first).rows();
    let steps = states.len();
    let stacked = g.concat_rows(states)?;
    if g.value(stacked).cols() != att.hidden {
        return Err(Error::shape("attention", g.shape(stacked), &[att.hidden]));
    }
    let proj = g.matmul(stacked, p[att.w_a])?;
    let proj = g.tanh(proj);
    let energy = g.matmul(proj, p[att.v_a])?;
    let energy = g.reshape(energy, &[steps, batch])?;
    let energy = g.transpose(energy)?;
    let weights = g.softmax_rows(energy)?;
    let spread = g.constant(Tensor::matrix(1, att.hidden, vec![1.0; att.hidden])?);
    let mut context: Option<Var> = None;
    for (t, &h_t) in states.iter().enumerate() {
        let a = g.slice_cols(weights, t, 1)?;
        let a = g.matmul(a, spread)?;
        let term = g.mul(a, h_t)?;
        context = Some(match context {
            Some(c) => g.add(c, term)?,
            None => term,
        });
    }
    Ok(Pooled {
        context: context.expect("at least one step"),
        weights,
    })
}
