use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Adam moment and step settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty added to the gradient before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        Self {
            config,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Contract(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::Dimension {
                    op: "adam",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gi = gi + weight_decay * *w;
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::squared_norm).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        for g in grads {
            g.data_mut().iter_mut().for_each(|x| *x *= scale);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn first_step_matches_closed_form_on_a_quadratic() {
        // f(w) = 0.5 * sum(c * w^2), gradient c * w.
        let w0 = [1.5, -2.0, 0.25];
        let c = [2.0, 0.5, 10.0];
        let mut params = vec![Tensor::vector(w0.to_vec()).unwrap()];
        let grads = vec![Tensor::vector(w0.iter().zip(&c).map(|(w, c)| w * c).collect()).unwrap()];
        let cfg = AdamConfig {
            lr: 0.01,
            ..Default::default()
        };
        let mut adam = Adam::new(cfg, &params);
        adam.step(&mut params, &grads).unwrap();
        for i in 0..3 {
            let g = w0[i] * c[i];
            // m_hat = g, v_hat = g^2 after bias correction.
            let m_hat = (1.0 - cfg.beta1) * g / (1.0 - cfg.beta1);
            let v_hat = (1.0 - cfg.beta2) * g * g / (1.0 - cfg.beta2);
            let expect = w0[i] - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            assert!((params[0].data()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn second_step_matches_closed_form() {
        let mut params = vec![Tensor::vector(vec![1.0]).unwrap()];
        let cfg = AdamConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..Default::default()
        };
        let mut adam = Adam::new(cfg, &params);
        let mut w = 1.0f64;
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=2 {
            let g = 2.0 * w + 0.5 * w;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let step = 0.1 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            w -= step;
            let grad = vec![Tensor::vector(vec![2.0 * params[0].data()[0]]).unwrap()];
            adam.step(&mut params, &grad).unwrap();
            assert!((params[0].data()[0] - w).abs() < 1e-12);
        }
        assert_eq!(adam.steps(), 2);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let original = Tensor::vector(vec![0.3, -1.7]).unwrap();
        let mut params = vec![original.clone()];
        let cfg = AdamConfig {
            lr: 0.0,
            weight_decay: 0.1,
            ..Default::default()
        };
        let mut adam = Adam::new(cfg, &params);
        for _ in 0..5 {
            adam.step(&mut params, &[Tensor::vector(vec![4.0, -2.0]).unwrap()]).unwrap();
        }
        assert_eq!(params[0], original);
    }

    #[test]
    fn clipping_hand_case() {
        let mut g = vec![Tensor::vector(vec![3.0]).unwrap(), Tensor::vector(vec![4.0]).unwrap()];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15);
        assert!((g[1].data()[0] - 0.8).abs() < 1e-15);
        let mut small = vec![Tensor::vector(vec![0.1, 0.2]).unwrap()];
        clip_global_norm(&mut small, 5.0);
        assert_eq!(small[0].data(), &[0.1, 0.2]);
    }

    proptest! {
        #[test]
        fn clipped_norm_never_exceeds_bound(v in prop::collection::vec(-100.0f64..100.0, 1..20), bound in 0.1f64..10.0) {
            let mut g = vec![Tensor::vector(v).unwrap()];
            clip_global_norm(&mut g, bound);
            prop_assert!(g[0].squared_norm().sqrt() <= bound * (1.0 + 1e-12));
        }
    }
}
