//! Central finite-difference verification of backward passes.
//!
//! Every analytic gradient (parameters and input) is compared against
//! (L(p + h) - L(p - h)) / 2h with the network evaluated in f64, which
//! keeps the attainable agreement well below the 1e-4 acceptance bar.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::loss::{bce, bce_grad, mse, mse_grad};
use crate::nn::tensor::Tensor;
use crate::nn::{Activation, LayerSpec, Network, Padding};

/// Loss under which gradients are checked.
#[derive(Debug, Clone)]
pub enum CheckLoss {
    /// Squared-error against a fixed target of the output shape.
    Mse(Tensor<f64>),
    /// Binary cross-entropy against one label; output must be scalar.
    Bce(f64),
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub name: String,
    /// Worst relative disagreement across all checked coordinates.
    pub max_rel_err: f64,
    pub coords_checked: usize,
}

fn eval_loss(net: &Network, x: &Tensor<f64>, loss: &CheckLoss) -> Result<f64> {
    let y = net.infer(x)?;
    match loss {
        CheckLoss::Mse(target) => mse(target, &y),
        CheckLoss::Bce(label) => bce(&[*label], &[y.data()[0]]),
    }
}

fn get_param(net: &Network, li: usize, part: usize, i: usize) -> f64 {
    if part == 0 {
        net.params[li].weights[i]
    } else {
        net.params[li].bias[i]
    }
}

fn set_param(net: &mut Network, li: usize, part: usize, i: usize, v: f64) {
    if part == 0 {
        net.params[li].weights[i] = v;
    } else {
        net.params[li].bias[i] = v;
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    let denom = analytic.abs().max(numeric.abs());
    if denom > 1e-6 {
        diff / denom
    } else {
        diff
    }
}

/// Check every parameter and every input coordinate of `net` against
/// central differences with step `h`.
pub fn check_gradients(
    name: &str,
    net: &mut Network,
    x: &Tensor<f64>,
    loss: &CheckLoss,
    h: f64,
) -> Result<GradCheckReport> {
    let acts = net.forward(x)?;
    let output = acts.output().clone();
    let upstream = match loss {
        CheckLoss::Mse(target) => mse_grad(target, &output)?,
        CheckLoss::Bce(label) => {
            let g = bce_grad(&[*label], &[output.data()[0]])?;
            Tensor::from_vec(output.shape(), g)?
        }
    };
    let grads = net.backward(&acts, &upstream)?;

    let mut max_rel = 0.0f64;
    let mut checked = 0usize;

    for li in 0..net.layers.len() {
        for part in 0..2 {
            let len = if part == 0 {
                net.params[li].weights.len()
            } else {
                net.params[li].bias.len()
            };
            for i in 0..len {
                let analytic = if part == 0 {
                    grads.params[li].weights[i]
                } else {
                    grads.params[li].bias[i]
                };
                let old = get_param(net, li, part, i);
                set_param(net, li, part, i, old + h);
                let hi = eval_loss(net, x, loss)?;
                set_param(net, li, part, i, old - h);
                let lo = eval_loss(net, x, loss)?;
                set_param(net, li, part, i, old);
                let numeric = (hi - lo) / (2.0 * h);
                max_rel = max_rel.max(rel_err(analytic, numeric));
                checked += 1;
            }
        }
    }

    // Input gradient: exercises layers that own no parameters.
    let mut xp = x.clone();
    for i in 0..xp.len() {
        let old = xp.data()[i];
        xp.data_mut()[i] = old + h;
        let hi = eval_loss(net, &xp, loss)?;
        xp.data_mut()[i] = old - h;
        let lo = eval_loss(net, &xp, loss)?;
        xp.data_mut()[i] = old;
        let numeric = (hi - lo) / (2.0 * h);
        max_rel = max_rel.max(rel_err(grads.input.data()[i], numeric));
        checked += 1;
    }

    Ok(GradCheckReport {
        name: name.to_string(),
        max_rel_err: max_rel,
        coords_checked: checked,
    })
}

/// Values spaced at least `gap` apart in magnitude with mixed signs, in
/// shuffled order. Keeps finite differences clear of ReLU kinks and
/// max-pool ties.
pub fn spaced_values(n: usize, gap: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vals: Vec<f64> = (0..n)
        .map(|i| {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            sign * (gap * 2.0 + gap * i as f64)
        })
        .collect();
    // Fisher-Yates with the same rng.
    for i in (1..vals.len()).rev() {
        let j = rng.gen_range(0..=i);
        vals.swap(i, j);
    }
    vals
}

fn spaced_tensor(shape: &[usize], gap: f64, seed: u64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, spaced_values(n, gap, seed)).unwrap()
}

/// One small network per layer type, plus a composite encoder/decoder
/// stack. Shared by the unit tests and the acceptance suite.
pub fn layer_battery() -> Result<Vec<(String, Network, Tensor<f64>, CheckLoss)>> {
    let mut cases = Vec::new();
    let conv = |oc, k, s, p| LayerSpec::Conv2D {
        out_channels: oc,
        kernel: k,
        stride: s,
        padding: p,
    };
    let convt = |oc, k, s, p, op| LayerSpec::ConvT2D {
        out_channels: oc,
        kernel: k,
        stride: s,
        padding: p,
        output_padding: op,
    };

    let mut push = |name: &str, input_shape: &[usize], layers: Vec<LayerSpec>, seed: u64| -> Result<()> {
        let net = Network::new(input_shape, layers, seed)?;
        let x = spaced_tensor(input_shape, 0.011, seed ^ 0x5eed);
        let loss = match net.output_shape() {
            [1] if matches!(net.layers.last(), Some(LayerSpec::Activation(Activation::Sigmoid))) => {
                CheckLoss::Bce(1.0)
            }
            out => CheckLoss::Mse(spaced_tensor(out, 0.017, seed ^ 0x7a47)),
        };
        cases.push((name.to_string(), net, x, loss));
        Ok(())
    };

    push("conv2d_stride1_valid", &[6, 8, 2], vec![conv(3, 3, 1, Padding::Valid)], 11)?;
    push(
        "conv2d_stride2_padded",
        &[6, 8, 2],
        vec![conv(2, 3, 2, Padding::Explicit(1))],
        12,
    )?;
    push("convt2d_stride2", &[3, 4, 2], vec![convt(3, 3, 2, 0, 0)], 13)?;
    push(
        "convt2d_padded_output_padding",
        &[3, 4, 2],
        vec![convt(2, 3, 2, 1, 1)],
        14,
    )?;
    push("maxpool2d", &[6, 8, 2], vec![LayerSpec::MaxPool2D], 15)?;
    push(
        "zeropad2d",
        &[3, 4, 2],
        vec![LayerSpec::ZeroPad2D {
            top: 1,
            bottom: 2,
            left: 0,
            right: 3,
        }],
        16,
    )?;
    push(
        "dense",
        &[5, 3, 1],
        vec![LayerSpec::Flatten, LayerSpec::Dense { out_features: 4 }],
        17,
    )?;
    push(
        "reshape",
        &[4, 6, 1],
        vec![LayerSpec::Reshape {
            shape: vec![6, 4, 1],
        }],
        18,
    )?;
    push(
        "relu",
        &[4, 4, 1],
        vec![LayerSpec::Activation(Activation::ReLU)],
        19,
    )?;
    push(
        "sigmoid",
        &[4, 4, 1],
        vec![LayerSpec::Activation(Activation::Sigmoid)],
        20,
    )?;
    push(
        "linear_activation",
        &[4, 4, 1],
        vec![LayerSpec::Activation(Activation::Linear)],
        21,
    )?;
    // Miniature of the autoencoder round trip.
    push(
        "composite_encoder_decoder",
        &[6, 8, 1],
        vec![
            conv(2, 3, 1, Padding::Valid),
            LayerSpec::Activation(Activation::ReLU),
            LayerSpec::MaxPool2D,
            LayerSpec::Flatten,
            LayerSpec::Dense { out_features: 3 },
            LayerSpec::Activation(Activation::ReLU),
            LayerSpec::Dense { out_features: 12 },
            LayerSpec::Reshape {
                shape: vec![2, 3, 2],
            },
            convt(1, 3, 2, 1, 1),
        ],
        22,
    )?;
    // Miniature classifier head through a sigmoid + BCE.
    push(
        "composite_classifier",
        &[6, 8, 1],
        vec![
            conv(2, 3, 2, Padding::Valid),
            LayerSpec::Activation(Activation::ReLU),
            LayerSpec::Flatten,
            LayerSpec::Dense { out_features: 4 },
            LayerSpec::Activation(Activation::ReLU),
            LayerSpec::Dense { out_features: 1 },
            LayerSpec::Activation(Activation::Sigmoid),
        ],
        23,
    )?;
    Ok(cases)
}

/// Run the whole battery with the standard step size.
pub fn verify_layer_gradients(h: f64) -> Result<Vec<GradCheckReport>> {
    layer_battery()?
        .into_iter()
        .map(|(name, mut net, x, loss)| check_gradients(&name, &mut net, &x, &loss, h))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::adam::{adam_step, AdamConfig, AdamState};
    use crate::nn::LayerParams;

    #[test]
    fn battery_passes_at_1e4() {
        for report in verify_layer_gradients(1e-3).unwrap() {
            assert!(
                report.max_rel_err < 1e-4,
                "{}: max rel err {}",
                report.name,
                report.max_rel_err
            );
        }
    }

    #[test]
    fn dense_gradient_matches_closed_form() {
        // Single linear dense layer y = Wx + b with MSE-sum loss:
        // dL/dW = 2 (Wx + b - t) x^T, dL/db = 2 (Wx + b - t).
        let net = Network::new(&[3], vec![LayerSpec::Dense { out_features: 2 }], 5).unwrap();
        let x = Tensor::from_vec(&[3], vec![0.4, -0.7, 1.1]).unwrap();
        let t = Tensor::from_vec(&[2], vec![0.3, -0.2]).unwrap();

        let acts = net.forward(&x).unwrap();
        let y = acts.output().clone();
        let upstream = mse_grad(&t, &y).unwrap();
        let grads = net.backward(&acts, &upstream).unwrap();

        let resid: Vec<f64> = y
            .data()
            .iter()
            .zip(t.data())
            .map(|(yi, ti)| 2.0 * (yi - ti))
            .collect();
        for o in 0..2 {
            assert!((grads.params[0].bias[o] - resid[o]).abs() < 1e-12);
            for i in 0..3 {
                let want = resid[o] * x.data()[i];
                let got = grads.params[0].weights[i * 2 + o];
                assert!((got - want).abs() < 1e-12, "w[{i},{o}]: {got} vs {want}");
            }
        }
    }

    #[test]
    fn training_decreases_loss_on_toy_problem() {
        // Sanity of the whole train step: dense net fits a fixed target.
        let mut net = Network::new(
            &[4],
            vec![
                LayerSpec::Dense { out_features: 8 },
                LayerSpec::Activation(Activation::ReLU),
                LayerSpec::Dense { out_features: 4 },
            ],
            9,
        )
        .unwrap();
        let x = Tensor::from_vec(&[4], vec![0.3, -0.8, 0.5, 0.9]).unwrap();
        let target = Tensor::from_vec(&[4], vec![1.0, 0.0, -1.0, 0.5]).unwrap();
        let mut state = AdamState::new(&net, AdamConfig::with_lr(0.01));
        let mut first = None;
        let mut last = 0.0;
        for _ in 0..200 {
            let acts = net.forward(&x).unwrap();
            let loss = mse(&target, acts.output()).unwrap();
            let upstream = mse_grad(&target, acts.output()).unwrap();
            let grads = net.backward(&acts, &upstream).unwrap();
            let layer_grads: Vec<LayerParams> = grads.params;
            adam_step(&mut net, &layer_grads, &mut state).unwrap();
            first.get_or_insert(loss);
            last = loss;
        }
        assert!(last < first.unwrap() * 0.01, "{last} vs {first:?}");
    }
}
