use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::Dense;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m_w: Array2<f64>,
    v_w: Array2<f64>,
    m_b: Array1<f64>,
    v_b: Array1<f64>,
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update with the configured step size.
    pub fn step(&mut self, layers: &mut [&mut Dense]) -> Result<()> {
        let lr = self.config.lr;
        self.step_with_lr(layers, lr)
    }

    /// One update with an explicit step size (for scheduled learning rates).
    pub fn step_with_lr(&mut self, layers: &mut [&mut Dense], lr: f64) -> Result<()> {
        for (i, l) in layers.iter().enumerate() {
            if l.grad_weight.iter().chain(l.grad_bias.iter()).any(|g| !g.is_finite()) {
                return Err(Error::Training {
                    layer: Some(i),
                    msg: "non-finite gradient".into(),
                });
            }
        }
        if self.moments.is_empty() {
            self.moments = layers
                .iter()
                .map(|l| Moments {
                    m_w: Array2::zeros(l.weight.dim()),
                    v_w: Array2::zeros(l.weight.dim()),
                    m_b: Array1::zeros(l.bias.len()),
                    v_b: Array1::zeros(l.bias.len()),
                })
                .collect();
        }
        if self.moments.len() != layers.len()
            || self
                .moments
                .iter()
                .zip(layers.iter())
                .any(|(m, l)| m.m_w.dim() != l.weight.dim() || m.m_b.len() != l.bias.len())
        {
            return Err(Error::State("optimizer state does not match model layout".into()));
        }

        self.step += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (l, mo) in layers.iter_mut().zip(self.moments.iter_mut()) {
            Zip::from(&mut l.weight)
                .and(&l.grad_weight)
                .and(&mut mo.m_w)
                .and(&mut mo.v_w)
                .for_each(update);
            Zip::from(&mut l.bias)
                .and(&l.grad_bias)
                .and(&mut mo.m_b)
                .and(&mut mo.v_b)
                .for_each(update);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::Activation;
    use crate::rng::seeded;

    fn layer() -> Dense {
        Dense::init(3, 2, Activation::Identity, &mut seeded(11))
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut l = layer();
        let before = l.clone();
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut l]).unwrap();
        assert_eq!(l.weight, before.weight);
        assert_eq!(l.bias, before.bias);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut l = layer();
        let before = l.clone();
        l.grad_weight = ndarray::array![[0.5, -2.0, 1e-3], [-7.0, 3.0, 0.25]];
        l.grad_bias = ndarray::array![-0.1, 4.0];
        let cfg = AdamConfig::default();
        let mut adam = Adam::new(cfg);
        adam.step(&mut [&mut l]).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        for ((p, p0), g) in l.weight.iter().zip(before.weight.iter()).zip(l.grad_weight.iter()) {
            let expect = p0 - cfg.lr * g / (g.abs() + cfg.eps);
            assert!((p - expect).abs() < 1e-15);
            assert!(((p0 - p).abs() - cfg.lr).abs() < 1e-7);
        }
        for ((p, p0), g) in l.bias.iter().zip(before.bias.iter()).zip(l.grad_bias.iter()) {
            assert!((p - (p0 - cfg.lr * g / (g.abs() + cfg.eps))).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        let mut l = layer();
        let before = l.clone();
        let g = ndarray::array![[1.0, -0.3, 2.0], [-5.0, 0.01, -1.0]];
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..50 {
            l.grad_weight.assign(&g);
            adam.step(&mut [&mut l]).unwrap();
        }
        assert_eq!(adam.step_count(), 50);
        for ((p, p0), gi) in l.weight.iter().zip(before.weight.iter()).zip(g.iter()) {
            assert_eq!((p - p0).signum(), -gi.signum());
        }
    }

    #[test]
    fn non_finite_gradient_names_layer() {
        let mut a = layer();
        let mut b = layer();
        b.grad_bias[1] = f64::INFINITY;
        let mut adam = Adam::new(AdamConfig::default());
        match adam.step(&mut [&mut a, &mut b]) {
            Err(Error::Training { layer, .. }) => assert_eq!(layer, Some(1)),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(adam.step_count(), 0);
    }
}
