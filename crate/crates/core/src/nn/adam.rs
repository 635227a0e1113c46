//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LayerParams, Network};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

/// First/second moment estimates mirroring the network's parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub step: u64,
    first: Vec<LayerParams>,
    second: Vec<LayerParams>,
}

impl AdamState {
    pub fn new(net: &Network, cfg: AdamConfig) -> Self {
        let zeros = |p: &LayerParams| LayerParams {
            weights: vec![0.0; p.weights.len()],
            bias: vec![0.0; p.bias.len()],
        };
        AdamState {
            cfg,
            step: 0,
            first: net.params.iter().map(zeros).collect(),
            second: net.params.iter().map(zeros).collect(),
        }
    }
}

/// One optimizer step over every trainable parameter. Errors out on
/// non-finite gradients instead of poisoning the moments.
pub fn adam_step(net: &mut Network, grads: &[LayerParams], state: &mut AdamState) -> Result<()> {
    if grads.len() != net.params.len() {
        return Err(Error::Argument(format!(
            "gradient count {} does not match layer count {}",
            grads.len(),
            net.params.len()
        )));
    }
    for g in grads {
        if g.weights.iter().chain(g.bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Train {
                epoch: 0,
                msg: "non-finite gradient".into(),
            });
        }
    }

    state.step += 1;
    let t = state.step as f64;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        epsilon,
    } = state.cfg;
    let bc1 = 1.0 - beta1.powf(t);
    let bc2 = 1.0 - beta2.powf(t);

    for (li, grad) in grads.iter().enumerate() {
        let apply = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        };
        apply(
            &mut net.params[li].weights,
            &grad.weights,
            &mut state.first[li].weights,
            &mut state.second[li].weights,
        );
        apply(
            &mut net.params[li].bias,
            &grad.bias,
            &mut state.first[li].bias,
            &mut state.second[li].bias,
        );
    }
    net.bump_generation();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;

    fn scalar_net() -> Network {
        // One dense 1->1 layer: a single weight and a single bias.
        Network::new(&[1], vec![LayerSpec::Dense { out_features: 1 }], 0).unwrap()
    }

    fn grads_of(net: &Network, w: f64, b: f64) -> Vec<LayerParams> {
        net.params
            .iter()
            .map(|p| LayerParams {
                weights: vec![w; p.weights.len()],
                bias: vec![b; p.bias.len()],
            })
            .collect()
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut net = scalar_net();
        let before = net.params.clone();
        let mut state = AdamState::new(&net, AdamConfig::default());
        for _ in 0..5 {
            let g = grads_of(&net, 0.0, 0.0);
            adam_step(&mut net, &g, &mut state).unwrap();
        }
        assert_eq!(net.params, before);
        assert_eq!(state.step, 5);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // With constant gradient 1, bias-corrected m_hat = 1, v_hat = 1,
        // so step 1 moves by lr / (1 + eps) ~ lr.
        let mut net = scalar_net();
        let w0 = net.params[0].weights[0];
        let mut state = AdamState::new(&net, AdamConfig::default());
        let g = grads_of(&net, 1.0, 1.0);
        adam_step(&mut net, &g, &mut state).unwrap();
        let delta = w0 - net.params[0].weights[0];
        assert!((delta - 1e-3).abs() < 1e-8, "delta {delta}");
    }

    #[test]
    fn step_counter_increments_once_per_call() {
        let mut net = scalar_net();
        let mut state = AdamState::new(&net, AdamConfig::default());
        for want in 1..=3 {
            let g = grads_of(&net, 0.5, 0.0);
            adam_step(&mut net, &g, &mut state).unwrap();
            assert_eq!(state.step, want);
        }
    }

    #[test]
    fn nan_gradient_is_a_training_error() {
        let mut net = scalar_net();
        let mut state = AdamState::new(&net, AdamConfig::default());
        let g = grads_of(&net, f64::NAN, 0.0);
        assert!(matches!(
            adam_step(&mut net, &g, &mut state),
            Err(Error::Train { .. })
        ));
    }
}
