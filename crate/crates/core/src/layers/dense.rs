use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm::INIT_SCALE;
use super::params::{constant, uniform, Bound, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Unary, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
    Sigmoid,
}

/// Fully connected layer `activation(x·W + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::Config(format!("dense `{name}` needs positive sizes")));
        }
        let weight = store.add(format!("{name}.weight"), uniform(inputs, outputs, INIT_SCALE, rng));
        let bias = store.add(format!("{name}.bias"), constant(1, outputs, 0.0));
        Ok(Self {
            inputs,
            outputs,
            weight,
            bias,
            activation,
        })
    }
}

pub fn dense(g: &mut Graph<'_>, x: Var, layer: &Dense, p: &Bound) -> Result<Var> {
    let pre = g.matmul(x, p[layer.weight])?;
    let pre = g.add_bias(pre, p[layer.bias])?;
    Ok(match layer.activation {
        Activation::Linear => pre,
        Activation::Relu => g.unary(pre, Unary::Relu),
        Activation::Tanh => g.unary(pre, Unary::Tanh),
        Activation::Sigmoid => g.unary(pre, Unary::Sigmoid),
    })
}
