//! Residual backbones for every root/downsampling variant, with residual extra
//! blocks, realized as a layer graph whose taps form a fixed detection ladder.

mod builder;
mod config;
mod network;
mod spec;

pub use builder::{build_backbone, build_extra_blocks, build_root_block, extra_block_geometry};
pub use config::{BackboneConfig, ResNetVariant};
pub use network::{FeaturePyramid, ForwardCache, Network};
pub use spec::{LayerDesc, LayerKind, NetworkSpec};
