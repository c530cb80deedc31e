use super::ParamTensor;
use crate::error::Result;
use crate::tensor::{conv2d_forward, xavier_init, SeededRng, Tensor};

/// Convolution layer owning its weight and optional bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub weight: ParamTensor,
    pub bias: Option<ParamTensor>,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    /// Xavier-initialized weight `(out, in, k, k)`; bias starts at zero.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let weight = xavier_init(&[out_channels, in_channels, kernel, kernel], rng)?;
        Ok(Conv2d {
            weight: ParamTensor::new(format!("{name}.weight"), weight),
            bias: bias
                .then(|| ParamTensor::new(format!("{name}.bias"), Tensor::zeros(&[out_channels]))),
            stride,
            pad,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv2d_forward(
            x,
            &self.weight.value,
            self.bias.as_ref().map(|b| b.value.data()),
            self.stride,
            self.pad,
        )
    }

    /// Accumulates parameter gradients and returns the input gradient if requested.
    pub fn backward(
        &mut self,
        grad_out: &Tensor,
        x: &Tensor,
        want_input: bool,
    ) -> Result<Option<Tensor>> {
        let (gi, gw, gb) = crate::tensor::conv2d_backward_parts(
            grad_out,
            x,
            &self.weight.value,
            self.stride,
            self.pad,
            want_input,
        )?;
        self.weight.accumulate(gw.data());
        if let Some(b) = self.bias.as_mut() {
            b.accumulate(&gb);
        }
        Ok(gi)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut())
    }

    pub fn params(&self) -> impl Iterator<Item = &ParamTensor> {
        std::iter::once(&self.weight).chain(self.bias.as_ref())
    }
}
