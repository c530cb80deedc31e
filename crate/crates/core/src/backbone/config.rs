use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declarative description of a residual backbone and its detection ladder.
///
/// The four ResNet-18 variants compared in the downsampling study differ only
/// in `first_conv_kernel`, `first_conv_stride`, `root_depth` and
/// `use_first_maxpool`; see [`BackboneConfig::resnet18`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    /// 3 or 7. Must be 3 when `root_depth > 1`.
    pub first_conv_kernel: usize,
    /// 1 or 2.
    pub first_conv_stride: usize,
    /// Number of stacked 3×3 convs in the root block (1..=5); 1 means a single conv of `first_conv_kernel`.
    pub root_depth: usize,
    pub use_first_maxpool: bool,
    pub stage_channels: Vec<usize>,
    pub stage_blocks: Vec<usize>,
    pub bn_in_backbone: bool,
    pub input_size: usize,
    /// Spatial sizes of the detection layers, strictly decreasing.
    pub target_ladder: Vec<usize>,
    /// Output channels of the residual extra blocks appended after the stages.
    #[serde(default = "default_extra_channels")]
    pub extra_channels: usize,
    #[serde(default = "default_input_channels")]
    pub input_channels: usize,
}

fn default_extra_channels() -> usize {
    128
}

fn default_input_channels() -> usize {
    3
}

/// The four structural variants of the downsampling study.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResNetVariant {
    /// 7×7 stride-2 first conv followed by max pooling.
    Original,
    /// Max pooling removed.
    NoMaxPool,
    /// First conv stride 1.
    NoFirstStride,
    /// First conv stride 1 and a three-layer 3×3 root block.
    Root,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl BackboneConfig {
    /// ResNet-18 at 300×300 with the SSD300 ladder.
    pub fn resnet18(variant: ResNetVariant) -> Self {
        let mut c = BackboneConfig {
            first_conv_kernel: 7,
            first_conv_stride: 2,
            root_depth: 1,
            use_first_maxpool: true,
            stage_channels: vec![64, 128, 256, 512],
            stage_blocks: vec![2, 2, 2, 2],
            bn_in_backbone: true,
            input_size: 300,
            target_ladder: vec![38, 19, 10, 5, 3, 1],
            extra_channels: 128,
            input_channels: 3,
        };
        c.apply_variant(variant);
        c
    }

    /// Desk-scale Root-ResNet: 96×96 input, ladder [12, 6, 3, 1].
    pub fn desk() -> Self {
        BackboneConfig {
            first_conv_kernel: 3,
            first_conv_stride: 1,
            root_depth: 3,
            use_first_maxpool: true,
            stage_channels: vec![16, 32, 64, 64],
            stage_blocks: vec![2, 2, 2, 2],
            bn_in_backbone: true,
            input_size: 96,
            target_ladder: vec![12, 6, 3, 1],
            extra_channels: 128,
            input_channels: 3,
        }
    }

    pub fn apply_variant(&mut self, variant: ResNetVariant) {
        let (k, s, depth, pool) = match variant {
            ResNetVariant::Original => (7, 2, 1, true),
            ResNetVariant::NoMaxPool => (7, 2, 1, false),
            ResNetVariant::NoFirstStride => (7, 1, 1, true),
            ResNetVariant::Root => (3, 1, 3, true),
        };
        self.first_conv_kernel = k;
        self.first_conv_stride = s;
        self.root_depth = depth;
        self.use_first_maxpool = pool;
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !matches!(self.first_conv_kernel, 3 | 7) {
            return fail(format!(
                "first_conv_kernel must be 3 or 7, got {}",
                self.first_conv_kernel
            ));
        }
        if !matches!(self.first_conv_stride, 1 | 2) {
            return fail(format!(
                "first_conv_stride must be 1 or 2, got {}",
                self.first_conv_stride
            ));
        }
        if !(1..=5).contains(&self.root_depth) {
            return fail(format!(
                "root_depth must be in 1..=5, got {}",
                self.root_depth
            ));
        }
        if self.root_depth > 1 && self.first_conv_kernel != 3 {
            return fail("root_depth > 1 requires first_conv_kernel == 3".into());
        }
        if self.stage_channels.is_empty() || self.stage_channels.len() != self.stage_blocks.len() {
            return fail(
                "stage_channels and stage_blocks must be non-empty and equally long".into(),
            );
        }
        if self.stage_channels.contains(&0) || self.stage_blocks.contains(&0) {
            return fail("stage channel and block counts must be positive".into());
        }
        if self.input_size == 0 || self.input_channels == 0 || self.extra_channels == 0 {
            return fail("input_size, input_channels and extra_channels must be positive".into());
        }
        if self.target_ladder.is_empty() {
            return fail("target_ladder must be non-empty".into());
        }
        if self.target_ladder.windows(2).any(|w| w[0] <= w[1]) {
            return fail(format!(
                "target_ladder {:?} must be strictly decreasing",
                self.target_ladder
            ));
        }
        if *self.target_ladder.last().unwrap() < 1 {
            return fail("target_ladder entries must be ≥ 1".into());
        }
        Ok(())
    }
}
