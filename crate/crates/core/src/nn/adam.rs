use alloc::vec;
use alloc::vec::Vec;

use super::{Network, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer over a network's parameter buffers.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    config: AdamConfig,
    step: u32,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, network: &Network<T>) -> Self {
        let mut first = Vec::new();
        network.for_each_conv(|c| {
            first.push(vec![T::zero(); c.weight.len()]);
            first.push(vec![T::zero(); c.bias.len()]);
        });
        let second = first.clone();
        Adam {
            config,
            step: 0,
            first,
            second,
        }
    }

    pub fn steps(&self) -> u32 {
        self.step
    }

    /// Applies one update from the gradients accumulated in `network`.
    pub fn step(&mut self, network: &mut Network<T>) {
        self.step += 1;
        let c = self.config;
        let b1 = T::from_f64(c.beta1);
        let b2 = T::from_f64(c.beta2);
        let one = T::one();
        let bias1 = 1.0 - libm::pow(c.beta1, self.step as f64);
        let bias2 = 1.0 - libm::pow(c.beta2, self.step as f64);
        let lr_t = T::from_f64(c.learning_rate * libm::sqrt(bias2) / bias1);
        let eps_t = T::from_f64(c.eps * libm::sqrt(bias2));
        let mut slot = 0;
        let (first, second) = (&mut self.first, &mut self.second);
        network.for_each_conv_mut(|conv| {
            for (param, grad) in [
                (&mut conv.weight, &conv.grad_weight),
                (&mut conv.bias, &conv.grad_bias),
            ] {
                let m = &mut first[slot];
                let v = &mut second[slot];
                for i in 0..param.len() {
                    let g = grad[i];
                    m[i] = b1 * m[i] + (one - b1) * g;
                    v[i] = b2 * v[i] + (one - b2) * g * g;
                    param[i] = param[i] - lr_t * m[i] / (v[i].sqrt() + eps_t);
                }
                slot += 1;
            }
        });
    }
}
