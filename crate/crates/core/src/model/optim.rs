//! Adam with linear warmup and global-norm gradient clipping.

use super::params::{Gradients, Params};
use super::scalar::Scalar;
use super::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Fraction of the planned steps spent ramping the rate up from zero.
    pub warmup_fraction: f64,
    /// Gradients with a larger global L2 norm are rescaled to this norm;
    /// 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        AdamSettings {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            warmup_fraction: 0.05,
            clip_norm: 1.0,
        }
    }
}

impl AdamSettings {
    /// Rate for 1-based `step` out of `total` planned steps: linear ramp over
    /// the warmup steps, then constant.
    pub fn rate_at(&self, step: usize, total: usize) -> f64 {
        let warmup = (self.warmup_fraction * total as f64).ceil() as usize;
        if warmup == 0 || step >= warmup {
            self.learning_rate
        } else {
            self.learning_rate * step as f64 / warmup as f64
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: usize,
    pub m: Vec<Matrix<T>>,
    pub v: Vec<Matrix<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &Params<T>) -> Self {
        let zeros = || params.tensors.iter().map(|t| Matrix::zeros(t.rows, t.cols)).collect();
        AdamState {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Clips `grads`, then applies one update at `rate`. Returns the
    /// gradient norm before clipping.
    pub fn update(&mut self, params: &mut Params<T>, grads: &mut Gradients<T>, settings: &AdamSettings, rate: f64) -> f64 {
        let norm = grads.norm();
        if settings.clip_norm > 0.0 && norm > settings.clip_norm {
            grads.scale(T::of(settings.clip_norm / norm));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::of(settings.beta1), T::of(settings.beta2));
        let c1 = T::of(1.0 - settings.beta1.powi(t));
        let c2 = T::of(1.0 - settings.beta2.powi(t));
        let lr = T::of(rate);
        let eps = T::of(settings.epsilon);
        let one = T::one();
        for (i, p) in params.tensors.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[i].data, &mut self.v[i].data, &grads.tensors[i].data);
            for j in 0..p.data.len() {
                m[j] = b1 * m[j] + (one - b1) * g[j];
                v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                p.data[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_ramps_then_holds() {
        let s = AdamSettings::default();
        assert_eq!(s.rate_at(1, 100), 3e-4 / 5.0);
        assert_eq!(s.rate_at(5, 100), 3e-4);
        assert_eq!(s.rate_at(80, 100), 3e-4);
        let flat = AdamSettings {
            warmup_fraction: 0.0,
            ..s
        };
        assert_eq!(flat.rate_at(1, 100), 3e-4);
    }

    #[test]
    fn first_step_moves_each_weight_by_the_rate() {
        // with bias correction the first Adam step is lr · g / (|g| + eps)
        let cfg = crate::model::ModelConfig {
            d_model: 4,
            n_heads: 1,
            ff_dim: 4,
            max_len: 4,
            encoder_layers: 1,
            decoder_layers: 1,
            ..crate::model::ModelConfig::desk(6)
        };
        let mut params = Params::<f64>::init(&cfg, 1).unwrap();
        let before = params.clone();
        let mut grads = Gradients::zeros_like(&params);
        grads.tensors[0].data[0] = 0.5;
        grads.tensors[0].data[1] = -0.25;
        let mut state = AdamState::new(&params);
        let settings = AdamSettings::default();
        state.update(&mut params, &mut grads, &settings, 0.01);
        let d0 = params.tensors[0].data[0] - before.tensors[0].data[0];
        let d1 = params.tensors[0].data[1] - before.tensors[0].data[1];
        assert!((d0 + 0.01).abs() < 1e-9);
        assert!((d1 - 0.01).abs() < 1e-9);
        assert_eq!(params.tensors[1], before.tensors[1]);
    }
}
