use serde::{Deserialize, Serialize};

use crate::tensor::conv_output_size;

/// One node of a layer graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    /// The network input; always node 0.
    Input {
        channels: usize,
    },
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    },
    BatchNorm {
        channels: usize,
    },
    Relu,
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    /// Elementwise sum of two nodes (residual join).
    Add,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDesc {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
    /// Indices of earlier nodes feeding this one.
    pub inputs: Vec<usize>,
}

/// Immutable, serializable layer graph in topological order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_size: usize,
    pub layers: Vec<LayerDesc>,
    /// Nodes whose outputs form the feature pyramid, finest first.
    pub detection_taps: Vec<usize>,
}

impl NetworkSpec {
    pub fn input_channels(&self) -> usize {
        match self.layers.first().map(|l| &l.kind) {
            Some(LayerKind::Input { channels }) => *channels,
            _ => 0,
        }
    }

    /// `(channels, spatial size)` of every node for the configured input size.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let src = layer.inputs.first().map(|&i| out[i]);
            let shape = match &layer.kind {
                LayerKind::Input { channels } => (*channels, self.input_size),
                LayerKind::Conv {
                    out_channels,
                    kernel,
                    stride,
                    pad,
                    ..
                } => {
                    let (_, s) = src.expect("conv has an input");
                    (
                        *out_channels,
                        conv_output_size(s, *kernel, *stride, *pad).unwrap_or(0),
                    )
                }
                LayerKind::MaxPool { kernel, stride } => {
                    let (c, s) = src.expect("pool has an input");
                    (c, conv_output_size(s, *kernel, *stride, 0).unwrap_or(0))
                }
                LayerKind::BatchNorm { .. } | LayerKind::Relu | LayerKind::Add => {
                    src.expect("layer has an input")
                }
            };
            out.push(shape);
        }
        out
    }

    /// Spatial sizes of the detection taps.
    pub fn tap_sizes(&self) -> Vec<usize> {
        let shapes = self.shapes();
        self.detection_taps.iter().map(|&t| shapes[t].1).collect()
    }

    pub fn tap_channels(&self) -> Vec<usize> {
        let shapes = self.shapes();
        self.detection_taps.iter().map(|&t| shapes[t].0).collect()
    }

    pub fn count_batchnorm(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l.kind, LayerKind::BatchNorm { .. }))
            .count()
    }

    /// Trainable parameter count: conv weights and biases plus BN γ and β.
    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l.kind {
                LayerKind::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    bias,
                    ..
                } => {
                    out_channels * in_channels * kernel * kernel
                        + if bias { out_channels } else { 0 }
                }
                LayerKind::BatchNorm { channels } => 2 * channels,
                _ => 0,
            })
            .sum()
    }
}
