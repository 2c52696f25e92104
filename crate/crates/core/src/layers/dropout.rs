use rand::Rng;

use super::Mode;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Var};

/// Inverted dropout: in train mode each entry is zeroed with probability
/// `rate` and survivors are scaled by `1/(1−rate)`. Infer mode is the identity.
pub fn dropout(g: &mut Graph<'_>, x: Var, rate: f64, mode: Mode, rng: &mut impl Rng) -> Result<Var> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::DropoutRate(rate));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    let mask = (0..g.value(x).len())
        .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
        .collect();
    g.mul_const(x, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use crate::tensor::Tensor;

    #[test]
    fn identity_cases() {
        let mut rng = rng_for(0, "d");
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(vec![1.0, 2.0, 3.0]).unwrap());
        assert_eq!(dropout(&mut g, x, 0.7, Mode::Infer, &mut rng).unwrap(), x);
        assert_eq!(dropout(&mut g, x, 0.0, Mode::Train, &mut rng).unwrap(), x);
        assert!(matches!(dropout(&mut g, x, 1.0, Mode::Train, &mut rng), Err(Error::DropoutRate(_))));
        assert!(dropout(&mut g, x, -0.1, Mode::Train, &mut rng).is_err());
    }
}
