//! Momentum SGD in the velocity-accumulates-learning-rate form:
//!
//! ```text
//! v ← momentum·v + lr·(grad + weight_decay·value)
//! value ← value − v
//! ```
//!
//! Because `lr` sits inside the velocity, changing the learning rate does not
//! rescale velocity already accumulated. Gradients are zeroed after the update.

use serde::{Deserialize, Serialize};

use super::ParamTensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            momentum: 0.9,
            weight_decay: 0.0005,
        }
    }
}

pub fn sgd_step<'a, I>(params: I, lr: f64, momentum: f64, weight_decay: f64) -> Result<()>
where
    I: IntoIterator<Item = &'a mut ParamTensor>,
{
    if !lr.is_finite() {
        return Err(Error::Config(format!(
            "learning rate must be finite, got {lr}"
        )));
    }
    for p in params {
        let ParamTensor {
            value,
            grad,
            momentum_buf,
            ..
        } = p;
        for ((w, g), v) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data_mut().iter_mut())
            .zip(momentum_buf.data_mut().iter_mut())
        {
            *v = momentum * *v + lr * (*g + weight_decay * *w);
            *w -= *v;
            *g = 0.0;
        }
    }
    Ok(())
}
