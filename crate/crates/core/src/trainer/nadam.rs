//! Adam moments with a Nesterov look-ahead on the first moment:
//!
//! ```text
//! m ← β₁m + (1−β₁)g        v ← β₂v + (1−β₂)g²
//! m̂ = β₁m / (1−β₁^(t+1)) + (1−β₁)g / (1−β₁^t)
//! v̂ = v / (1−β₂^t)
//! x ← x − lr·m̂ / (√v̂ + ε)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NadamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for NadamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl NadamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid Nadam hyperparameters {self:?}")));
        }
        Ok(())
    }
}

/// One Nadam step on a flat parameter slice. `t` is the step count after
/// incrementing (1 on the first step).
pub fn nadam_update(x: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], t: u64, cfg: &NadamConfig) {
    let NadamConfig { lr, beta1: b1, beta2: b2, eps } = *cfg;
    let t = t as i32;
    let c1_now = 1.0 - b1.powi(t);
    let c1_next = 1.0 - b1.powi(t + 1);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..x.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        let m_hat = b1 * m[i] / c1_next + (1.0 - b1) * g[i] / c1_now;
        let v_hat = v[i] / c2;
        x[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Step count and moments for every tensor of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct NadamState {
    pub config: NadamConfig,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl NadamState {
    pub fn new(store: &ParamStore, config: NadamConfig) -> Result<Self> {
        config.validate()?;
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Ok(Self {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        })
    }

    /// Applies `grads` (one optional slot per parameter, `None` for frozen
    /// ones) to `store`. Nothing is modified when any gradient is
    /// non-finite.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Vec<f64>>]) -> Result<()> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            return Err(Error::Config(format!(
                "{} gradients and {} moment slots for {} parameters",
                grads.len(),
                self.m.len(),
                store.len()
            )));
        }
        for ((id, name, t), g) in store.iter().zip(grads) {
            if let Some(g) = g {
                if g.len() != t.len() {
                    return Err(Error::shape("nadam_step", t.shape(), &[g.len()]));
                }
                if g.iter().any(|v| !v.is_finite()) {
                    log::error!("non-finite gradient in `{name}` (parameter {})", id.index());
                    return Err(Error::NonFiniteGradient { param: name.to_string() });
                }
            }
        }
        self.t += 1;
        let ids: Vec<_> = store.ids().collect();
        for (i, id) in ids.into_iter().enumerate() {
            let (Some(g), true) = (&grads[i], store.get(id).requires_grad()) else {
                continue;
            };
            let x = store.get_mut(id).data_mut();
            nadam_update(x, g, &mut self.m[i], &mut self.v[i], self.t, &self.config);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar_store(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", Tensor::matrix(1, 1, vec![x]).unwrap());
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = scalar_store(0.7);
        let mut st = NadamState::new(&store, NadamConfig::default()).unwrap();
        for _ in 0..5 {
            st.step(&mut store, &[Some(vec![0.0])]).unwrap();
        }
        assert_eq!(store.get(store.ids().next().unwrap()).data(), &[0.7]);
        assert_eq!(st.t, 5);
    }

    #[test]
    fn non_finite_gradient_aborts_without_change() {
        let mut store = scalar_store(1.0);
        let mut st = NadamState::new(&store, NadamConfig::default()).unwrap();
        let r = st.step(&mut store, &[Some(vec![f64::NAN])]);
        assert!(matches!(r, Err(Error::NonFiniteGradient { .. })));
        assert_eq!(st.t, 0);
        assert_eq!(store.get(store.ids().next().unwrap()).data(), &[1.0]);
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut store = scalar_store(1.0);
        let id = store.ids().next().unwrap();
        store.set_trainable(id, false);
        let mut st = NadamState::new(&store, NadamConfig::default()).unwrap();
        st.step(&mut store, &[Some(vec![3.0])]).unwrap();
        assert_eq!(store.get(id).data(), &[1.0]);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // with m̂ ≈ g/(1−β₁)·… the first step has magnitude lr·(β₁/(1−β₁²)·(1−β₁) + 1)
        let cfg = NadamConfig::default();
        let (mut x, mut m, mut v) = ([1.0], [0.0], [0.0]);
        nadam_update(&mut x, &[2.0], &mut m, &mut v, 1, &cfg);
        let expect = 1.0 - cfg.lr * (0.9 * 0.1 / (1.0 - 0.81) + 1.0) * 2.0 / (2.0 + 1e-8);
        assert!((x[0] - expect).abs() < 1e-15);
    }
}
