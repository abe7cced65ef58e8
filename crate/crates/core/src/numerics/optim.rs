use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use crate::scalar::Scalar;

/// AdamW hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam with decoupled weight decay. Decay applies only to parameters with
/// at least two axes, so biases, norms, and scalar offsets are left alone.
#[derive(Clone, Debug)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    decay: Vec<bool>,
    step: u64,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(store: &ParamStore<T>, config: AdamWConfig) -> Self {
        let (mut m, mut v, mut decay) = (Vec::new(), Vec::new(), Vec::new());
        for id in store.ids() {
            let t = store.get(id);
            m.push(vec![T::zero(); t.len()]);
            v.push(vec![T::zero(); t.len()]);
            decay.push(t.shape().len() >= 2);
        }
        Self {
            config,
            m,
            v,
            decay,
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>) {
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bc1 = T::lit(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::lit(1.0 - c.beta2.powi(self.step as i32));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        let wd = T::lit(c.lr * c.weight_decay);
        for id in store.ids().collect::<Vec<_>>() {
            let Some(g) = grads.get(id) else { continue };
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let decay = self.decay[id.0] && c.weight_decay > 0.0;
            let w = store.get_mut(id).data_mut();
            for i in 0..w.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                if decay {
                    w[i] -= wd * w[i];
                }
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                w[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Graph, Tensor};

    #[test]
    fn converges_on_quadratic() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::<f64>::new(vec![2], vec![3.0, -2.0]).unwrap()).unwrap();
        let cfg = AdamWConfig {
            lr: 0.05,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(&store, cfg);
        for _ in 0..2000 {
            let grads = {
                let mut g = Graph::new(&store);
                let p = g.param(w);
                let sq = g.mul(p, p).unwrap();
                let l = g.sum(sq);
                g.backward(l).unwrap();
                g.into_param_grads()
            };
            opt.step(&mut store, &grads);
        }
        assert!(store.get(w).data().iter().all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn decay_skips_vectors() {
        let mut store = ParamStore::new();
        let m = store.add("m", Tensor::<f64>::full(vec![2, 2], 1.0)).unwrap();
        let b = store.add("b", Tensor::full(vec![2], 1.0)).unwrap();
        let mut opt = AdamW::new(&store, AdamWConfig { lr: 0.1, weight_decay: 0.5, ..Default::default() });
        let mut grads = Gradients::zeros(2);
        grads.accumulate(m, &[0.0; 4]);
        grads.accumulate(b, &[0.0; 2]);
        opt.step(&mut store, &grads);
        assert!((store.get(m).data()[0] - 0.95).abs() < 1e-12);
        assert_eq!(store.get(b).data()[0], 1.0);
    }
}
