//! Stateful layers, detection losses, and the momentum SGD optimizer.

mod activation;
mod batchnorm;
mod conv;
mod loss;
mod param;
mod sgd;

pub use activation::{relu_backward, relu_forward};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, BatchNormState, BnCache, BnGrads, BN_EPS,
    BN_STATS_MOMENTUM,
};
pub use conv::Conv2d;
pub use loss::{smooth_l1, smooth_l1_scalar, softmax_cross_entropy, softmax_row, LossBreakdown};
pub use param::ParamTensor;
pub use sgd::{sgd_step, SgdConfig};

use serde::{Deserialize, Serialize};

/// Whether layers use batch statistics (and update running ones) or frozen statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Inference,
}
