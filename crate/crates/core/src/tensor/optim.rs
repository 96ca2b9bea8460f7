use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments, one moment pair per store entry.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = store
            .iter()
            .map(|(_, p)| vec![0.0; p.value.len()])
            .collect();
        Adam {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update. Fails without touching any parameter if a gradient
    /// is non-finite or a moment buffer does not match its parameter.
    pub fn update(&mut self, store: &mut ParamStore, grads: &[Option<Vec<f64>>]) -> Result<()> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            return Err(Error::Config(format!(
                "optimizer state covers {} parameters, store has {}, got {} gradients",
                self.m.len(),
                store.len(),
                grads.len()
            )));
        }
        for ((id, p), g) in store.iter().zip(grads) {
            if let Some(g) = g {
                if g.len() != p.value.len() || self.m[id.index()].len() != p.value.len() {
                    return Err(Error::shape("adam", p.value.shape(), &[g.len()]));
                }
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteGradient(p.name.clone()));
                }
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let ids: Vec<_> = store.iter().map(|(id, p)| (id, p.trainable)).collect();
        for (id, trainable) in ids {
            let Some(g) = &grads[id.index()] else {
                continue;
            };
            if !trainable {
                continue;
            }
            let m = &mut self.m[id.index()];
            let v = &mut self.v[id.index()];
            let w = store.value_mut(id).data_mut();
            for i in 0..g.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                w[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn one_param(w: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::from_vec(vec![w]), true).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [1e-3, 0.5, -20.0] {
            let mut s = one_param(1.0);
            let mut adam = Adam::new(&s, AdamConfig::default());
            adam.update(&mut s, &[Some(vec![g])]).unwrap();
            let delta = (s.by_name("w").unwrap().item() - 1.0).abs();
            assert!((delta - 1e-3).abs() < 1e-6, "g={g} delta={delta}");
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = one_param(0.7);
        let mut adam = Adam::new(&s, AdamConfig::default());
        adam.update(&mut s, &[Some(vec![0.0])]).unwrap();
        assert_eq!(s.by_name("w").unwrap().item(), 0.7);
    }

    #[test]
    fn converges_on_quadratic() {
        // f(w) = (w - 3)^2, scalar recurrence run independently below
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        let mut s = one_param(0.0);
        let mut adam = Adam::new(&s, cfg);
        let (mut w, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=200 {
            let cur = s.by_name("w").unwrap().item();
            adam.update(&mut s, &[Some(vec![2.0 * (cur - 3.0)])])
                .unwrap();
            let g = 2.0 * (w - 3.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            w -=
                0.1 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
        }
        let got = s.by_name("w").unwrap().item();
        assert!((got - w).abs() < 1e-12);
        assert!((got - 3.0).abs() < 0.05, "w = {got}");
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = one_param(1.0);
        let mut adam = Adam::new(&s, AdamConfig::default());
        let err = adam.update(&mut s, &[Some(vec![f64::NAN])]).unwrap_err();
        assert!(err.to_string().contains("`w`"));
        assert_eq!(s.by_name("w").unwrap().item(), 1.0);
    }
}
