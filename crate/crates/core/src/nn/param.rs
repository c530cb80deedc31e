use crate::tensor::Tensor;

/// A trainable tensor with its gradient accumulator and momentum buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub momentum_buf: Tensor,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        let momentum_buf = Tensor::zeros(value.shape());
        ParamTensor {
            name: name.into(),
            value,
            grad,
            momentum_buf,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Adds `g` elementwise into the gradient; panics on length mismatch.
    pub fn accumulate(&mut self, g: &[f64]) {
        assert_eq!(
            g.len(),
            self.grad.len(),
            "gradient length for {}",
            self.name
        );
        for (a, b) in self.grad.data_mut().iter_mut().zip(g) {
            *a += b;
        }
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }
}
