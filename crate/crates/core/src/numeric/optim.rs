use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::store::ParameterStore;

/// `θ ← θ − lr·g` for every trainable parameter, then zero all gradients.
pub fn sgd_step(store: &mut ParameterStore, learning_rate: f64) {
    for (_, p) in store.iter_mut() {
        if p.frozen || learning_rate == 0.0 {
            continue;
        }
        let g = p.grad.data().to_vec();
        for (v, gi) in p.value.data_mut().iter_mut().zip(&g) {
            *v -= learning_rate * gi;
        }
    }
    store.zero_grad();
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are created lazily per name.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update from the accumulated gradients; gradients are zeroed after.
    pub fn step(&mut self, store: &mut ParameterStore) {
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for (name, p) in store.iter_mut() {
            if p.frozen {
                continue;
            }
            let n = p.value.len();
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            let g = p.grad.data().to_vec();
            let values = p.value.data_mut();
            for i in 0..n {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                values[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        store.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tensor;

    fn quadratic_store() -> ParameterStore {
        let mut s = ParameterStore::new();
        s.insert("theta", Tensor::vector(vec![1.5, -2.0, 0.25]));
        s.insert_frozen("ctx", Tensor::vector(vec![3.0, 4.0]));
        s
    }

    fn set_quadratic_grad(s: &mut ParameterStore) -> f64 {
        let theta = s.value("theta").unwrap().data().to_vec();
        s.accumulate_grad("theta", &theta, 1.0);
        s.accumulate_grad("ctx", &[1.0, 1.0], 1.0);
        theta.iter().map(|x| x * x).sum::<f64>() / 2.0
    }

    #[test]
    fn sgd_step_follows_gradient() {
        let mut s = quadratic_store();
        set_quadratic_grad(&mut s);
        sgd_step(&mut s, 0.1);
        let got = s.value("theta").unwrap().data().to_vec();
        assert_eq!(got, vec![1.5 - 0.15, -2.0 + 0.2, 0.25 - 0.025]);
        assert!(s.grad("theta").unwrap().data().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut s = quadratic_store();
        let before = s.clone();
        set_quadratic_grad(&mut s);
        sgd_step(&mut s, 0.0);
        assert_eq!(s.value("theta"), before.value("theta"));
    }

    #[test]
    fn frozen_values_are_bit_identical_after_many_steps() {
        let mut s = quadratic_store();
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..50 {
            set_quadratic_grad(&mut s);
            adam.step(&mut s);
        }
        assert_eq!(s.value("ctx").unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn adam_decreases_convex_quadratic_monotonically_after_warmup() {
        let mut s = quadratic_store();
        let mut adam = Adam::new(AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        });
        let mut losses = Vec::new();
        for _ in 0..100 {
            losses.push(set_quadratic_grad(&mut s));
            adam.step(&mut s);
        }
        let warmup = 5;
        for w in losses[warmup..].windows(2) {
            assert!(w[1] < w[0], "loss rose from {} to {}", w[0], w[1]);
        }
        assert!(losses[99] < 0.5 * losses[0]);
    }
}
