//! Per-channel batch normalization over `(N, H, W)`.
//!
//! Train mode normalizes with the biased batch variance and updates the running
//! statistics as `running ← (1 − m)·running + m·batch`. Inference mode uses the
//! running statistics and leaves them untouched.

use super::{Mode, ParamTensor};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_STATS_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState {
    pub gamma: ParamTensor,
    pub beta: ParamTensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub stats_momentum: f64,
}

impl BatchNormState {
    /// γ = 1, β = 0, running mean 0 and variance 1.
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNormState {
            gamma: ParamTensor::new(format!("{name}.gamma"), Tensor::full(&[channels], 1.0)),
            beta: ParamTensor::new(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: BN_EPS,
            stats_momentum: BN_STATS_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }
}

/// Values saved by the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BnCache {
    mode: Mode,
    x_hat: Tensor,
    inv_std: Vec<f64>,
    gamma: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BnGrads {
    pub input: Tensor,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

fn channel_slices(
    n: usize,
    c: usize,
    hw: usize,
    ch: usize,
) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..n).map(move |ni| {
        let start = (ni * c + ch) * hw;
        start..start + hw
    })
}

pub fn batchnorm_forward(
    x: &Tensor,
    state: &mut BatchNormState,
    mode: Mode,
) -> Result<(Tensor, BnCache)> {
    const OP: &str = "batchnorm";
    let (n, c, h, w) = x.dims4(OP)?;
    if c != state.channels() {
        return Err(Error::dim(
            OP,
            format!(
                "input channels (axis 1) = {c} but state has {} channels",
                state.channels()
            ),
        ));
    }
    let hw = h * w;
    let m = n * hw;
    if mode == Mode::Train && m < 2 {
        return Err(Error::dim(
            OP,
            format!("train mode needs N·H·W ≥ 2 samples per channel, got {m}"),
        ));
    }
    let src = x.data();
    let gamma = state.gamma.value.data().to_vec();
    let beta = state.beta.value.data();
    let mut y = Tensor::zeros(x.shape());
    let mut x_hat = Tensor::zeros(x.shape());
    let mut inv_std = vec![0.0; c];
    for ch in 0..c {
        let (mean, var) = match mode {
            Mode::Train => {
                let mut sum = 0.0;
                for r in channel_slices(n, c, hw, ch) {
                    sum += src[r].iter().sum::<f64>();
                }
                let mean = sum / m as f64;
                let mut sq = 0.0;
                for r in channel_slices(n, c, hw, ch) {
                    sq += src[r].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
                }
                let var = sq / m as f64;
                let mo = state.stats_momentum;
                state.running_mean[ch] = (1.0 - mo) * state.running_mean[ch] + mo * mean;
                state.running_var[ch] = (1.0 - mo) * state.running_var[ch] + mo * var;
                (mean, var)
            }
            Mode::Inference => (state.running_mean[ch], state.running_var[ch]),
        };
        let is = 1.0 / (var + state.eps).sqrt();
        inv_std[ch] = is;
        for r in channel_slices(n, c, hw, ch) {
            for i in r {
                let xh = (src[i] - mean) * is;
                x_hat.data_mut()[i] = xh;
                y.data_mut()[i] = gamma[ch] * xh + beta[ch];
            }
        }
    }
    Ok((
        y,
        BnCache {
            mode,
            x_hat,
            inv_std,
            gamma,
        },
    ))
}

/// Exact gradient of the train-mode forward, including the dependence of the
/// batch mean and variance on the input.
pub fn batchnorm_backward(grad_y: &Tensor, cache: &BnCache) -> Result<BnGrads> {
    const OP: &str = "batchnorm_backward";
    if cache.mode != Mode::Train {
        return Err(Error::Contract(
            "batchnorm backward requires a train-mode forward cache".into(),
        ));
    }
    if grad_y.shape() != cache.x_hat.shape() {
        return Err(Error::dim(
            OP,
            format!("{:?} vs cached {:?}", grad_y.shape(), cache.x_hat.shape()),
        ));
    }
    let (n, c, h, w) = grad_y.dims4(OP)?;
    let hw = h * w;
    let m = (n * hw) as f64;
    let gy = grad_y.data();
    let xh = cache.x_hat.data();
    let mut grad_x = Tensor::zeros(grad_y.shape());
    let mut grad_gamma = vec![0.0; c];
    let mut grad_beta = vec![0.0; c];
    for ch in 0..c {
        let (mut sum_g, mut sum_gx) = (0.0, 0.0);
        for r in channel_slices(n, c, hw, ch) {
            for i in r {
                sum_g += gy[i];
                sum_gx += gy[i] * xh[i];
            }
        }
        grad_beta[ch] = sum_g;
        grad_gamma[ch] = sum_gx;
        let scale = cache.gamma[ch] * cache.inv_std[ch] / m;
        let out = grad_x.data_mut();
        for r in channel_slices(n, c, hw, ch) {
            for i in r {
                out[i] = scale * (m * gy[i] - sum_g - xh[i] * sum_gx);
            }
        }
    }
    Ok(BnGrads {
        input: grad_x,
        gamma: grad_gamma,
        beta: grad_beta,
    })
}
