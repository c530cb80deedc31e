use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Passes gradient where the forward input was strictly positive (subgradient 0 at 0).
pub fn relu_backward(grad_y: &Tensor, x: &Tensor) -> Result<Tensor> {
    if grad_y.shape() != x.shape() {
        return Err(Error::dim(
            "relu_backward",
            format!("{:?} vs {:?}", grad_y.shape(), x.shape()),
        ));
    }
    let mut g = grad_y.clone();
    for (gv, &xv) in g.data_mut().iter_mut().zip(x.data()) {
        if xv <= 0.0 {
            *gv = 0.0;
        }
    }
    Ok(g)
}
