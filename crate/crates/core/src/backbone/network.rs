//! Instantiated layer graph: weights, forward pass to the feature pyramid, and
//! the exact backward pass from pyramid gradients.

use super::spec::{LayerKind, NetworkSpec};
use crate::error::{Error, Result};
use crate::nn::{
    batchnorm_backward, batchnorm_forward, relu_backward, relu_forward, BatchNormState, BnCache,
    Conv2d, Mode, ParamTensor,
};
use crate::tensor::{maxpool2d_backward, maxpool2d_forward, SeededRng, Tensor};

#[derive(Clone, Debug)]
enum Layer {
    Input,
    Conv(Conv2d),
    BatchNorm(BatchNormState),
    Relu,
    MaxPool { kernel: usize, stride: usize },
    Add,
}

/// Detection-layer feature maps from one forward pass, finest first.
#[derive(Clone, Debug)]
pub struct FeaturePyramid {
    pub levels: Vec<Tensor>,
}

impl FeaturePyramid {
    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|t| t.shape()[2]).collect()
    }

    pub fn channels(&self) -> Vec<usize> {
        self.levels.iter().map(|t| t.shape()[1]).collect()
    }

    pub fn batch_size(&self) -> usize {
        self.levels.first().map_or(0, |t| t.shape()[0])
    }
}

#[derive(Clone, Debug)]
enum Aux {
    None,
    Bn(BnCache),
    Pool(Vec<usize>),
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    activations: Vec<Tensor>,
    aux: Vec<Aux>,
}

/// A [`NetworkSpec`] with weights and BN state.
#[derive(Clone, Debug)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
}

impl Network {
    /// Xavier-initializes every conv in node order.
    pub fn new(spec: NetworkSpec, rng: &mut SeededRng) -> Result<Self> {
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, desc) in spec.layers.iter().enumerate() {
            if i == 0 && !matches!(desc.kind, LayerKind::Input { .. }) {
                return Err(Error::Config("node 0 must be the input".into()));
            }
            if desc.inputs.iter().any(|&j| j >= i) {
                return Err(Error::Config(format!(
                    "node {i} ({}) reads a later node",
                    desc.name
                )));
            }
            let layer = match desc.kind {
                LayerKind::Input { .. } => Layer::Input,
                LayerKind::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    pad,
                    bias,
                } => Layer::Conv(Conv2d::new(
                    &desc.name,
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    pad,
                    bias,
                    rng,
                )?),
                LayerKind::BatchNorm { channels } => {
                    Layer::BatchNorm(BatchNormState::new(&desc.name, channels))
                }
                LayerKind::Relu => Layer::Relu,
                LayerKind::MaxPool { kernel, stride } => Layer::MaxPool { kernel, stride },
                LayerKind::Add => Layer::Add,
            };
            layers.push(layer);
        }
        Ok(Network { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Runs the graph and returns the tapped feature maps plus the backward cache.
    pub fn forward_pyramid(
        &mut self,
        batch: &Tensor,
        mode: Mode,
    ) -> Result<(FeaturePyramid, ForwardCache)> {
        let (_, c, h, w) = batch.dims4("forward_pyramid")?;
        if h != self.spec.input_size || w != self.spec.input_size || c != self.spec.input_channels()
        {
            return Err(Error::dim(
                "forward_pyramid",
                format!(
                    "input (C,H,W) = ({c},{h},{w}) but network expects ({},{},{})",
                    self.spec.input_channels(),
                    self.spec.input_size,
                    self.spec.input_size
                ),
            ));
        }
        let mut acts: Vec<Tensor> = Vec::with_capacity(self.layers.len());
        let mut aux = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let inputs = &self.spec.layers[i].inputs;
            let (out, a) = match layer {
                Layer::Input => (batch.clone(), Aux::None),
                Layer::Conv(conv) => (conv.forward(&acts[inputs[0]])?, Aux::None),
                Layer::BatchNorm(state) => {
                    let (y, cache) = batchnorm_forward(&acts[inputs[0]], state, mode)?;
                    (y, Aux::Bn(cache))
                }
                Layer::Relu => (relu_forward(&acts[inputs[0]]), Aux::None),
                Layer::MaxPool { kernel, stride } => {
                    let out = maxpool2d_forward(&acts[inputs[0]], *kernel, *stride)?;
                    (out.output, Aux::Pool(out.argmax))
                }
                Layer::Add => {
                    let mut s = acts[inputs[0]].clone();
                    s.add_assign(&acts[inputs[1]])?;
                    (s, Aux::None)
                }
            };
            acts.push(out);
            aux.push(a);
        }
        let levels = self
            .spec
            .detection_taps
            .iter()
            .map(|&t| acts[t].clone())
            .collect();
        Ok((
            FeaturePyramid { levels },
            ForwardCache {
                activations: acts,
                aux,
            },
        ))
    }

    /// Backpropagates pyramid gradients, accumulating into parameter gradients.
    ///
    /// Returns the gradient with respect to the network input when `want_input` is set.
    pub fn backward(
        &mut self,
        cache: &ForwardCache,
        tap_grads: &[Tensor],
        want_input: bool,
    ) -> Result<Option<Tensor>> {
        if tap_grads.len() != self.spec.detection_taps.len() {
            return Err(Error::dim(
                "network_backward",
                format!(
                    "{} tap gradients for {} taps",
                    tap_grads.len(),
                    self.spec.detection_taps.len()
                ),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.layers.len()];
        for (&t, g) in self.spec.detection_taps.iter().zip(tap_grads) {
            if g.shape() != cache.activations[t].shape() {
                return Err(Error::dim(
                    "network_backward",
                    format!(
                        "tap gradient {:?} vs activation {:?}",
                        g.shape(),
                        cache.activations[t].shape()
                    ),
                ));
            }
            accumulate(&mut grads[t], g.clone())?;
        }
        for i in (1..self.layers.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let inputs = self.spec.layers[i].inputs.clone();
            match &mut self.layers[i] {
                Layer::Input => {}
                Layer::Conv(conv) => {
                    let need = inputs[0] != 0 || want_input;
                    if let Some(gi) = conv.backward(&g, &cache.activations[inputs[0]], need)? {
                        accumulate(&mut grads[inputs[0]], gi)?;
                    }
                }
                Layer::BatchNorm(state) => {
                    let Aux::Bn(bc) = &cache.aux[i] else {
                        return Err(Error::Contract("missing batchnorm cache".into()));
                    };
                    let bg = batchnorm_backward(&g, bc)?;
                    state.gamma.accumulate(&bg.gamma);
                    state.beta.accumulate(&bg.beta);
                    accumulate(&mut grads[inputs[0]], bg.input)?;
                }
                Layer::Relu => {
                    // y > 0 exactly where x > 0.
                    let gi = relu_backward(&g, &cache.activations[i])?;
                    accumulate(&mut grads[inputs[0]], gi)?;
                }
                Layer::MaxPool { .. } => {
                    let Aux::Pool(argmax) = &cache.aux[i] else {
                        return Err(Error::Contract("missing max-pool indices".into()));
                    };
                    let gi = maxpool2d_backward(&g, argmax, cache.activations[inputs[0]].shape())?;
                    accumulate(&mut grads[inputs[0]], gi)?;
                }
                Layer::Add => {
                    accumulate(&mut grads[inputs[1]], g.clone())?;
                    accumulate(&mut grads[inputs[0]], g)?;
                }
            }
        }
        Ok(if want_input { grads[0].take() } else { None })
    }

    /// Parameters in node order (conv weight, bias; BN γ, β).
    pub fn params(&self) -> Vec<&ParamTensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => out.extend(c.params()),
                Layer::BatchNorm(b) => out.extend([&b.gamma, &b.beta]),
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => out.extend(c.params_mut()),
                Layer::BatchNorm(b) => out.extend([&mut b.gamma, &mut b.beta]),
                _ => {}
            }
        }
        out
    }

    pub fn batchnorms(&self) -> Vec<&BatchNormState> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::BatchNorm(b) => Some(b),
                _ => None,
            })
            .collect()
    }

    pub fn batchnorms_mut(&mut self) -> Vec<&mut BatchNormState> {
        self.layers
            .iter_mut()
            .filter_map(|l| match l {
                Layer::BatchNorm(b) => Some(b),
                _ => None,
            })
            .collect()
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) -> Result<()> {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}
