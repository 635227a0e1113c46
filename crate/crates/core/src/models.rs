//! The two detector architectures.
//!
//! `build_cae` is the convolutional autoencoder: a conv/pool encoder down
//! to an 8-value latent, then dense + transposed convolutions back up to
//! the input size with a linear output. `build_cnn` is the supervised
//! classifier ending in a single sigmoid neuron. Layer strides and the
//! pooling layers between the published output sizes are forced by the
//! parameter counts; both builders reproduce those counts exactly and
//! refuse to construct otherwise.
//!
//! `build_scaled` keeps the same topology at a quarter of the channel
//! width for quick CPU experiments, recomputing every dense size from the
//! shape chain and skipping a pooling step where the spatial map would
//! become too small for the next kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, LayerSpec, Network, Padding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cae,
    Cnn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cae => "cae",
            ModelKind::Cnn => "cnn",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cae" => Ok(ModelKind::Cae),
            "cnn" => Ok(ModelKind::Cnn),
            other => Err(Error::Argument(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Complete, buildable description of a model: the layer list plus the
/// analytic parameter total it must come out to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub kind: ModelKind,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub expected_param_total: usize,
    pub seed: u64,
}

impl ModelDescriptor {
    /// Instantiate the network and verify the parameter total.
    pub fn build(&self) -> Result<Network> {
        let net = Network::new(&self.input_shape, self.layers.clone(), self.seed)?;
        if net.param_count() != self.expected_param_total {
            return Err(Error::config(format!(
                "constructed {} has {} parameters, expected {}",
                self.kind.as_str(),
                net.param_count(),
                self.expected_param_total
            )));
        }
        Ok(net)
    }
}

/// Channel/latent widths of the CAE topology.
struct CaeWidths {
    conv1: usize,
    conv2: usize,
    latent: usize,
    convt1: usize,
    convt2: usize,
}

const CAE_FULL: CaeWidths = CaeWidths {
    conv1: 32,
    conv2: 64,
    latent: 8,
    convt1: 128,
    convt2: 64,
};

const CAE_DESK: CaeWidths = CaeWidths {
    conv1: 8,
    conv2: 16,
    latent: 8,
    convt1: 32,
    convt2: 16,
};

struct CnnWidths {
    conv1: usize,
    conv2: usize,
    conv3: usize,
    dense1: usize,
    dense2: usize,
}

const CNN_FULL: CnnWidths = CnnWidths {
    conv1: 32,
    conv2: 64,
    conv3: 128,
    dense1: 16,
    dense2: 8,
};

const CNN_DESK: CnnWidths = CnnWidths {
    conv1: 8,
    conv2: 16,
    conv3: 32,
    dense1: 16,
    dense2: 8,
};

/// Running (height, width) while assembling a layer chain.
struct Assembler {
    layers: Vec<LayerSpec>,
    h: usize,
    w: usize,
    c: usize,
    params: usize,
    /// When set, a pooling step that would starve the next kernel is
    /// skipped instead of failing.
    adaptive_pool: bool,
}

impl Assembler {
    fn new(rows: usize, cols: usize, adaptive_pool: bool) -> Self {
        Assembler {
            layers: Vec::new(),
            h: rows,
            w: cols,
            c: 1,
            params: 0,
            adaptive_pool,
        }
    }

    fn layer_idx(&self) -> usize {
        self.layers.len()
    }

    fn conv(&mut self, oc: usize, stride: usize) -> Result<()> {
        let k = 3;
        if self.h < k || self.w < k {
            return Err(Error::shape(
                self.layer_idx(),
                format!("conv kernel {k} does not fit {}x{}", self.h, self.w),
            ));
        }
        self.params += k * k * self.c * oc + oc;
        self.h = (self.h - k) / stride + 1;
        self.w = (self.w - k) / stride + 1;
        self.c = oc;
        self.layers.push(LayerSpec::Conv2D {
            out_channels: oc,
            kernel: k,
            stride,
            padding: Padding::Valid,
        });
        self.relu();
        Ok(())
    }

    fn relu(&mut self) {
        self.layers.push(LayerSpec::Activation(Activation::ReLU));
    }

    /// Pool unless adaptive mode decides the next kernel needs the pixels.
    fn pool(&mut self, next_kernel: usize) -> Result<()> {
        if self.adaptive_pool && (self.h / 2 < next_kernel || self.w / 2 < next_kernel) {
            return Ok(());
        }
        if self.h < 2 || self.w < 2 {
            return Err(Error::shape(
                self.layer_idx(),
                format!("maxpool needs at least 2x2, got {}x{}", self.h, self.w),
            ));
        }
        self.h /= 2;
        self.w /= 2;
        self.layers.push(LayerSpec::MaxPool2D);
        Ok(())
    }

    fn convt(&mut self, oc: usize, stride: usize, padding: usize, output_padding: usize) {
        let k = 3;
        self.params += k * k * self.c * oc + oc;
        self.h = (self.h - 1) * stride + k - 2 * padding + output_padding;
        self.w = (self.w - 1) * stride + k - 2 * padding + output_padding;
        self.c = oc;
        self.layers.push(LayerSpec::ConvT2D {
            out_channels: oc,
            kernel: k,
            stride,
            padding,
            output_padding,
        });
    }

    fn dense(&mut self, out: usize) {
        let inp = self.h * self.w * self.c;
        debug_assert!(matches!(
            self.layers.last(),
            Some(LayerSpec::Flatten) | Some(LayerSpec::Dense { .. }) | Some(LayerSpec::Activation(_))
        ));
        self.params += inp * out + out;
        self.h = 1;
        self.w = 1;
        self.c = out;
        self.layers.push(LayerSpec::Dense { out_features: out });
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows < 16 || cols < 16 {
        return Err(Error::config(format!(
            "spectrogram size {rows}x{cols} too small, need at least 16x16"
        )));
    }
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(Error::config(format!(
            "spectrogram size {rows}x{cols} must be even for the decoder to mirror it"
        )));
    }
    Ok(())
}

fn cae_layers(rows: usize, cols: usize, w: &CaeWidths, adaptive: bool) -> Result<(Vec<LayerSpec>, usize)> {
    check_dims(rows, cols)?;
    let mut a = Assembler::new(rows, cols, adaptive);

    // Encoder.
    a.conv(w.conv1, 2)?;
    a.pool(3)?;
    a.conv(w.conv2, 1)?;
    a.pool(1)?;
    let (ph, pw, pc) = (a.h, a.w, a.c);
    let flat = ph * pw * pc;
    a.layers.push(LayerSpec::Flatten);
    a.dense(w.latent);
    a.relu();

    // Decoder.
    a.dense(flat);
    a.relu();
    a.layers.push(LayerSpec::Reshape {
        shape: vec![ph, pw, pc],
    });
    a.h = ph;
    a.w = pw;
    a.c = pc;
    a.convt(w.convt1, 2, 0, 0);
    a.relu();
    a.convt(w.convt2, 2, 0, 0);
    a.relu();

    // Pad up to half the target, then one stride-2 transposed conv
    // doubles exactly ((n-1)*2 + 3 - 2*1 + 1 = 2n). End-aligned padding.
    let (th, tw) = (rows / 2, cols / 2);
    if a.h > th || a.w > tw {
        return Err(Error::shape(
            a.layer_idx(),
            format!(
                "decoder plane {}x{} exceeds zero-padding target {th}x{tw}",
                a.h, a.w
            ),
        ));
    }
    a.layers.push(LayerSpec::ZeroPad2D {
        top: 0,
        bottom: th - a.h,
        left: 0,
        right: tw - a.w,
    });
    a.h = th;
    a.w = tw;
    a.convt(1, 2, 1, 1);
    // Linear output: reconstruction targets are unbounded neg-log values.

    debug_assert_eq!((a.h, a.w, a.c), (rows, cols, 1));
    Ok((a.layers, a.params))
}

fn cnn_layers(rows: usize, cols: usize, w: &CnnWidths, adaptive: bool) -> Result<(Vec<LayerSpec>, usize)> {
    check_dims(rows, cols)?;
    let mut a = Assembler::new(rows, cols, adaptive);
    a.conv(w.conv1, 2)?;
    a.pool(3)?;
    a.conv(w.conv2, 1)?;
    a.pool(3)?;
    a.conv(w.conv3, 1)?;
    a.pool(1)?;
    a.layers.push(LayerSpec::Flatten);
    a.dense(w.dense1);
    a.relu();
    a.dense(w.dense2);
    a.relu();
    a.dense(1);
    a.layers.push(LayerSpec::Activation(Activation::Sigmoid));
    Ok((a.layers, a.params))
}

pub fn cae_descriptor(rows: usize, cols: usize, seed: u64) -> Result<ModelDescriptor> {
    let (layers, total) = cae_layers(rows, cols, &CAE_FULL, false)?;
    Ok(ModelDescriptor {
        kind: ModelKind::Cae,
        input_shape: vec![rows, cols, 1],
        layers,
        expected_param_total: total,
        seed,
    })
}

pub fn cnn_descriptor(rows: usize, cols: usize, seed: u64) -> Result<ModelDescriptor> {
    let (layers, total) = cnn_layers(rows, cols, &CNN_FULL, false)?;
    Ok(ModelDescriptor {
        kind: ModelKind::Cnn,
        input_shape: vec![rows, cols, 1],
        layers,
        expected_param_total: total,
        seed,
    })
}

/// Quarter-width variant of either topology for desk-scale runs.
pub fn scaled_descriptor(
    kind: ModelKind,
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<ModelDescriptor> {
    let (layers, total) = match kind {
        ModelKind::Cae => cae_layers(rows, cols, &CAE_DESK, true)?,
        ModelKind::Cnn => cnn_layers(rows, cols, &CNN_DESK, true)?,
    };
    Ok(ModelDescriptor {
        kind,
        input_shape: vec![rows, cols, 1],
        layers,
        expected_param_total: total,
        seed,
    })
}

pub fn build_cae(rows: usize, cols: usize, seed: u64) -> Result<Network> {
    cae_descriptor(rows, cols, seed)?.build()
}

pub fn build_cnn(rows: usize, cols: usize, seed: u64) -> Result<Network> {
    cnn_descriptor(rows, cols, seed)?.build()
}

pub fn build_scaled(kind: ModelKind, rows: usize, cols: usize, seed: u64) -> Result<Network> {
    scaled_descriptor(kind, rows, cols, seed)?.build()
}

/// Layer table for visual inspection: layer name, output size, parameter
/// count, matching the published table layout (activations omitted).
pub fn describe(net: &Network) -> String {
    let mut out = String::new();
    let width = 18;
    out.push_str(&format!(
        "{:<width$} {:<16} {:>14}\n",
        "Layer", "Output size", "Parameters"
    ));
    out.push_str(&format!(
        "{:<width$} {:<16} {:>14}\n",
        "Input",
        shape_str(net.input_shape()),
        0
    ));
    for (i, layer) in net.layers.iter().enumerate() {
        let name = match layer {
            LayerSpec::Conv2D { .. } => "Conv2D",
            LayerSpec::MaxPool2D => "MaxPool2D",
            LayerSpec::ConvT2D { .. } => "ConvT2D",
            LayerSpec::ZeroPad2D { .. } => "ZeroPad2D",
            LayerSpec::Dense { .. } => "Dense",
            LayerSpec::Flatten => "Flatten",
            LayerSpec::Reshape { .. } => "Reshape",
            LayerSpec::Activation(_) => continue,
        };
        out.push_str(&format!(
            "{:<width$} {:<16} {:>14}\n",
            name,
            shape_str(&net.shapes[i + 1]),
            net.params[i].len()
        ));
    }
    out.push_str(&format!(
        "{:<width$} {:<16} {:>14}\n",
        "Total",
        "",
        net.param_count()
    ));
    out
}

fn shape_str(shape: &[usize]) -> String {
    shape
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(" x ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn cae_matches_published_parameter_column() {
        let net = build_cae(100, 1024, 0).unwrap();
        assert_eq!(
            net.param_counts_per_layer(),
            vec![320, 18_496, 709_640, 798_336, 73_856, 73_792, 577]
        );
        assert_eq!(net.param_count(), 1_675_017);
    }

    #[test]
    fn cae_matches_published_shape_chain() {
        let net = build_cae(100, 1024, 0).unwrap();
        let expect: Vec<Vec<usize>> = vec![
            vec![49, 511, 32],
            vec![24, 255, 32],
            vec![22, 253, 64],
            vec![11, 126, 64],
            vec![88_704],
            vec![8],
            vec![88_704],
            vec![11, 126, 64],
            vec![23, 253, 128],
            vec![47, 507, 64],
            vec![50, 512, 64],
            vec![100, 1024, 1],
        ];
        let got: Vec<Vec<usize>> = net
            .layers
            .iter()
            .zip(net.shapes.iter().skip(1))
            .filter(|(l, _)| !matches!(l, LayerSpec::Activation(_)))
            .map(|(_, s)| s.clone())
            .collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn cnn_matches_published_parameter_column() {
        let net = build_cnn(100, 1024, 0).unwrap();
        assert_eq!(
            net.param_counts_per_layer(),
            vec![320, 18_496, 73_856, 507_920, 136, 9]
        );
        assert_eq!(net.param_count(), 600_737);
    }

    #[test]
    fn cnn_matches_published_shape_chain() {
        let net = build_cnn(100, 1024, 0).unwrap();
        let expect: Vec<Vec<usize>> = vec![
            vec![49, 511, 32],
            vec![24, 255, 32],
            vec![22, 253, 64],
            vec![11, 126, 64],
            vec![9, 124, 128],
            vec![4, 62, 128],
            vec![31_744],
            vec![16],
            vec![8],
            vec![1],
        ];
        let got: Vec<Vec<usize>> = net
            .layers
            .iter()
            .zip(net.shapes.iter().skip(1))
            .filter(|(l, _)| !matches!(l, LayerSpec::Activation(_)))
            .map(|(_, s)| s.clone())
            .collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn cae_round_trip_shape_full_and_scaled() {
        let full = build_cae(100, 1024, 0).unwrap();
        assert_eq!(full.output_shape(), full.input_shape());
        let desk = build_scaled(ModelKind::Cae, 32, 128, 0).unwrap();
        assert_eq!(desk.output_shape(), &[32, 128, 1]);
        assert_eq!(desk.input_shape(), &[32, 128, 1]);
    }

    #[test]
    fn scaled_cnn_constructs_and_outputs_probability() {
        let net = build_scaled(ModelKind::Cnn, 32, 128, 3).unwrap();
        assert_eq!(net.output_shape(), &[1]);
        let x = Tensor::filled(&[32, 128, 1], 0.3);
        let y = net.infer(&x).unwrap();
        let p = y.data()[0];
        assert!(p > 0.0 && p < 1.0, "sigmoid output {p}");
    }

    #[test]
    fn scaled_cae_is_smaller_than_full() {
        let full = build_cae(100, 1024, 0).unwrap();
        let desk = build_scaled(ModelKind::Cae, 32, 128, 0).unwrap();
        assert!(desk.param_count() < full.param_count());
    }

    #[test]
    fn cae_forward_on_zeros_has_expected_shape_and_finite_values() {
        let net = build_cae(100, 1024, 1).unwrap();
        let x = Tensor::zeros(&[100, 1024, 1]);
        let y = net.infer(&x).unwrap();
        assert_eq!(y.shape(), &[100, 1024, 1]);
        assert!(y.all_finite());
    }

    #[test]
    fn odd_sizes_are_rejected() {
        assert!(build_cae(33, 128, 0).is_err());
        assert!(build_cnn(100, 15, 0).is_err());
    }

    #[test]
    fn describe_lists_every_table_row() {
        let net = build_cnn(100, 1024, 0).unwrap();
        let table = describe(&net);
        assert!(table.contains("31744"));
        assert!(table.contains("507920"));
        assert!(table.contains("600737"));
        assert!(!table.contains("ReLU"));
    }
}
