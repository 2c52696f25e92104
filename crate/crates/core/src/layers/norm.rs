use serde::{Deserialize, Serialize};

use super::params::{constant, Bound, ParamId, ParamStore};
use super::Mode;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Var};

pub const DEFAULT_EPSILON: f64 = 1e-7;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

/// Per-feature batch normalization: learned scale/shift plus the running
/// statistics used at inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormParams {
    pub features: usize,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

/// Statistics of one train-mode batch, applied later with [`BatchNormParams::update`].
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// biased (divided by the row count)
    pub var: Vec<f64>,
    pub rows: usize,
}

impl BatchNormParams {
    pub fn new(store: &mut ParamStore, name: &str, features: usize) -> Result<Self> {
        if features == 0 {
            return Err(Error::Config(format!("batch norm `{name}` needs features")));
        }
        let gamma = store.add(format!("{name}.gamma"), constant(1, features, 1.0));
        let beta = store.add(format!("{name}.beta"), constant(1, features, 0.0));
        Ok(Self {
            features,
            gamma,
            beta,
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            eps: DEFAULT_EPSILON,
            momentum: DEFAULT_MOMENTUM,
        })
    }

    /// Moves the running statistics toward a batch's, storing the unbiased
    /// variance.
    pub fn update(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        let correction = if stats.rows > 1 {
            stats.rows as f64 / (stats.rows - 1) as f64
        } else {
            1.0
        };
        for (r, v) in self.running_mean.iter_mut().zip(&stats.mean) {
            *r = (1.0 - m) * *r + m * v;
        }
        for (r, v) in self.running_var.iter_mut().zip(&stats.var) {
            *r = ((1.0 - m) * *r + m * v * correction).max(0.0);
        }
    }
}

/// Train mode normalizes by the batch's own statistics and returns them;
/// infer mode uses the running statistics.
pub fn batch_norm(
    g: &mut Graph<'_>,
    x: Var,
    bn: &BatchNormParams,
    mode: Mode,
    p: &Bound,
) -> Result<(Var, Option<BatchStats>)> {
    match mode {
        Mode::Train => {
            let rows = g.value(x).rows();
            let (y, mean, var) = g.batch_norm_train(x, p[bn.gamma], p[bn.beta], bn.eps)?;
            Ok((y, Some(BatchStats { mean, var, rows })))
        }
        Mode::Infer => {
            let y = g.batch_norm_frozen(
                x,
                p[bn.gamma],
                p[bn.beta],
                &bn.running_mean,
                &bn.running_var,
                bn.eps,
            )?;
            Ok((y, None))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn setup(n: usize) -> (ParamStore, BatchNormParams) {
        let mut store = ParamStore::new();
        let bn = BatchNormParams::new(&mut store, "bn", n).unwrap();
        (store, bn)
    }

    #[test]
    fn infer_mode_with_unit_stats_is_identity() {
        let (store, mut bn) = setup(2);
        bn.eps = 0.0;
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let x = g.constant(Tensor::matrix(2, 2, vec![1.5, -2.0, 0.25, 8.0]).unwrap());
        let (y, stats) = batch_norm(&mut g, x, &bn, Mode::Infer, &p).unwrap();
        assert!(stats.is_none());
        assert_eq!(g.value(y).data(), &[1.5, -2.0, 0.25, 8.0]);
    }

    #[test]
    fn constant_feature_normalizes_to_zero() {
        let (store, bn) = setup(1);
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let x = g.constant(Tensor::matrix(3, 1, vec![4.0; 3]).unwrap());
        let (y, _) = batch_norm(&mut g, x, &bn, Mode::Train, &p).unwrap();
        assert_eq!(g.value(y).data(), &[0.0; 3]);
    }

    #[test]
    fn single_row_train_batch_is_rejected() {
        let (store, bn) = setup(2);
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let x = g.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        assert!(matches!(
            batch_norm(&mut g, x, &bn, Mode::Train, &p),
            Err(Error::BatchTooSmall(1))
        ));
    }

    #[test]
    fn running_stats_track_batches() {
        let (_, mut bn) = setup(1);
        bn.momentum = 1.0;
        bn.update(&BatchStats {
            mean: vec![2.0],
            var: vec![1.0],
            rows: 4,
        });
        assert_eq!(bn.running_mean, vec![2.0]);
        assert!((bn.running_var[0] - 4.0 / 3.0).abs() < 1e-15);
    }
}
