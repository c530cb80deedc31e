//! Construction of residual backbones with a fixed detection ladder.
//!
//! Layout: root block → optional 2×2 max pool → residual stages → residual
//! extra blocks. Stage `i ≥ 1` starts with a stride-2 block. The reference
//! layout downsamples twice before the stages (stride-2 first conv and max
//! pool); when a variant drops one of those, the first block of stage 0
//! takes stride 2 instead so every detection tap keeps its size. The first
//! block of every stage carries a 1×1 projection shortcut, so stride changes
//! never change the parameter count.

use super::config::BackboneConfig;
use super::spec::{LayerDesc, LayerKind, NetworkSpec};
use crate::error::{Error, Result};
use crate::tensor::conv_output_size;

struct SpecBuilder {
    layers: Vec<LayerDesc>,
    shapes: Vec<(usize, usize)>,
    bn: bool,
}

impl SpecBuilder {
    fn new(input_channels: usize, input_size: usize, bn: bool) -> Self {
        SpecBuilder {
            layers: vec![LayerDesc {
                name: "input".into(),
                kind: LayerKind::Input {
                    channels: input_channels,
                },
                inputs: vec![],
            }],
            shapes: vec![(input_channels, input_size)],
            bn,
        }
    }

    fn shape(&self, idx: usize) -> (usize, usize) {
        self.shapes[idx]
    }

    fn push(&mut self, name: String, kind: LayerKind, inputs: Vec<usize>) -> usize {
        let (c, s) = self.shapes[inputs[0]];
        let shape = match &kind {
            LayerKind::Conv {
                out_channels,
                kernel,
                stride,
                pad,
                ..
            } => (
                *out_channels,
                conv_output_size(s, *kernel, *stride, *pad).unwrap_or(0),
            ),
            LayerKind::MaxPool { kernel, stride } => {
                (c, conv_output_size(s, *kernel, *stride, 0).unwrap_or(0))
            }
            _ => (c, s),
        };
        self.layers.push(LayerDesc { name, kind, inputs });
        self.shapes.push(shape);
        self.layers.len() - 1
    }

    /// Conv followed by BN when enabled; the conv carries a bias only without BN.
    fn conv(
        &mut self,
        name: &str,
        input: usize,
        out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> usize {
        let (in_channels, _) = self.shape(input);
        let bn = self.bn;
        let idx = self.push(
            name.to_string(),
            LayerKind::Conv {
                in_channels,
                out_channels: out,
                kernel,
                stride,
                pad,
                bias: !bn,
            },
            vec![input],
        );
        if bn {
            self.push(
                format!("{name}.bn"),
                LayerKind::BatchNorm { channels: out },
                vec![idx],
            )
        } else {
            idx
        }
    }

    fn relu(&mut self, name: &str, input: usize) -> usize {
        self.push(format!("{name}.relu"), LayerKind::Relu, vec![input])
    }

    fn conv_relu(
        &mut self,
        name: &str,
        input: usize,
        out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> usize {
        let c = self.conv(name, input, out, kernel, stride, pad);
        self.relu(name, c)
    }

    fn add_relu(&mut self, name: &str, a: usize, b: usize) -> usize {
        let s = self.push(format!("{name}.add"), LayerKind::Add, vec![a, b]);
        self.relu(name, s)
    }

    fn finish(self, input_size: usize, taps: Vec<usize>) -> NetworkSpec {
        NetworkSpec {
            input_size,
            layers: self.layers,
            detection_taps: taps,
        }
    }

    fn root(
        &mut self,
        input: usize,
        depth: usize,
        kernel: usize,
        stride: usize,
        channels: usize,
    ) -> Result<usize> {
        if !(1..=5).contains(&depth) {
            return Err(Error::Config(format!(
                "root depth must be in 1..=5, got {depth}"
            )));
        }
        if depth > 1 && kernel != 3 {
            return Err(Error::Config("a stacked root block uses 3×3 convs".into()));
        }
        let mut x = input;
        for i in 0..depth {
            let (k, s) = if i == 0 { (kernel, stride) } else { (3, 1) };
            x = self.conv_relu(&format!("root.conv{}", i + 1), x, channels, k, s, k / 2);
        }
        Ok(x)
    }

    /// Basic residual block: two 3×3 convs plus identity or 1×1 projection shortcut.
    fn basic_block(
        &mut self,
        name: &str,
        input: usize,
        out: usize,
        stride: usize,
        projection: bool,
    ) -> usize {
        let a = self.conv_relu(&format!("{name}.conv1"), input, out, 3, stride, 1);
        let b = self.conv(&format!("{name}.conv2"), a, out, 3, 1, 1);
        let shortcut = if projection {
            self.conv(&format!("{name}.shortcut"), input, out, 1, stride, 0)
        } else {
            input
        };
        self.add_relu(name, b, shortcut)
    }

    /// Two-branch block: 1×1 stride-2 conv ‖ 3×3 stride-2 conv → 3×3 conv.
    fn extra_block(
        &mut self,
        name: &str,
        input: usize,
        out: usize,
        target: usize,
    ) -> Result<usize> {
        let (_, h) = self.shape(input);
        let (stride_a, pad_b) = extra_block_geometry(h, target).ok_or_else(|| {
            Error::Config(format!(
                "extra block cannot map spatial size {h} to {target} with a stride-2 reduction"
            ))
        })?;
        let b1 = self.conv_relu(&format!("{name}.branch_b.conv1"), input, out, 3, 2, pad_b);
        let b2 = self.conv(&format!("{name}.branch_b.conv2"), b1, out, 3, 1, 1);
        let a = self.conv(&format!("{name}.branch_a"), input, out, 1, stride_a, 0);
        Ok(self.add_relu(name, b2, a))
    }
}

/// `(1×1 branch stride, 3×3 branch pad)` taking size `h` to `target`.
///
/// The 3×3 stride-2 branch uses pad 1 (output `ceil(h/2)`) or pad 0
/// (`floor((h−1)/2)`); the 1×1 branch uses the smallest stride ≥ 2 that lands on
/// the same size.
pub fn extra_block_geometry(h: usize, target: usize) -> Option<(usize, usize)> {
    let pad = [1, 0]
        .into_iter()
        .find(|&p| conv_output_size(h, 3, 2, p) == Some(target))?;
    let stride = (2..=h.max(2)).find(|&s| conv_output_size(h, 1, s, 0) == Some(target))?;
    Some((stride, pad))
}

/// Spatial sizes before the stages, plus the stride of stage 0.
fn stem_plan(cfg: &BackboneConfig) -> Result<(usize, usize), String> {
    let k = if cfg.root_depth > 1 {
        3
    } else {
        cfg.first_conv_kernel
    };
    let mut size = conv_output_size(cfg.input_size, k, cfg.first_conv_stride, k / 2)
        .ok_or_else(|| "input smaller than the first conv".to_string())?;
    if cfg.use_first_maxpool {
        size = conv_output_size(size, 2, 2, 0)
            .ok_or_else(|| "input too small for max pooling".to_string())?;
    }
    let fixed = usize::from(cfg.first_conv_stride == 2) + usize::from(cfg.use_first_maxpool);
    match 2 - fixed {
        0 => Ok((size, 1)),
        1 => Ok((size, 2)),
        _ => Err("removing both the first-conv stride and the max pool leaves two reductions uncompensated; only stage 0 can absorb one".into()),
    }
}

fn stage_sizes(cfg: &BackboneConfig, stem_size: usize, stage0_stride: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(cfg.stage_channels.len());
    let mut s = stem_size;
    for i in 0..cfg.stage_channels.len() {
        let stride = if i == 0 { stage0_stride } else { 2 };
        s = conv_output_size(s, 3, stride, 1).unwrap_or(0);
        sizes.push(s);
    }
    sizes
}

/// Ladders of the requested length this stage layout can realize.
fn achievable_ladders(stages: &[usize], len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for start in 0..stages.len() {
        let mut ladder: Vec<usize> = stages[start..].iter().copied().take(len).collect();
        while ladder.len() < len {
            let h = *ladder.last().unwrap();
            if h <= 1 {
                break;
            }
            ladder.push(if h == 3 { 1 } else { h.div_ceil(2) });
        }
        if ladder.len() == len && ladder.windows(2).all(|w| w[0] > w[1]) && !out.contains(&ladder) {
            out.push(ladder);
        }
    }
    out
}

/// Builds the layer graph for `cfg`, with detection taps hitting `target_ladder` exactly.
pub fn build_backbone(cfg: &BackboneConfig) -> Result<NetworkSpec> {
    cfg.validate()?;
    let ladder = &cfg.target_ladder;
    let ladder_err = |reason: String, achievable: Vec<Vec<usize>>| Error::Ladder {
        requested: ladder.clone(),
        reason,
        achievable,
    };
    let (stem_size, stage0_stride) = stem_plan(cfg).map_err(|r| ladder_err(r, vec![]))?;
    let sizes = stage_sizes(cfg, stem_size, stage0_stride);
    let achievable = achievable_ladders(&sizes, ladder.len());

    let first = sizes.iter().position(|&s| s == ladder[0]).ok_or_else(|| {
        ladder_err(
            format!(
                "no stage produces {}×{} (stage sizes {sizes:?})",
                ladder[0], ladder[0]
            ),
            achievable.clone(),
        )
    })?;
    let stage_taps = (sizes.len() - first).min(ladder.len());
    for j in 1..stage_taps {
        if sizes[first + j] != ladder[j] {
            return Err(ladder_err(
                format!(
                    "stage {} produces {} where the ladder needs {}",
                    first + j,
                    sizes[first + j],
                    ladder[j]
                ),
                achievable,
            ));
        }
    }
    let built_stages = first + stage_taps;
    let mut prev = ladder[stage_taps - 1];
    for &t in &ladder[stage_taps..] {
        if extra_block_geometry(prev, t).is_none() {
            return Err(ladder_err(
                format!("an extra block cannot reduce {prev} to {t}"),
                achievable,
            ));
        }
        prev = t;
    }

    let mut b = SpecBuilder::new(cfg.input_channels, cfg.input_size, cfg.bn_in_backbone);
    let root_kernel = if cfg.root_depth > 1 {
        3
    } else {
        cfg.first_conv_kernel
    };
    let mut x = b.root(
        0,
        cfg.root_depth,
        root_kernel,
        cfg.first_conv_stride,
        cfg.stage_channels[0],
    )?;
    if cfg.use_first_maxpool {
        x = b.push(
            "pool1".into(),
            LayerKind::MaxPool {
                kernel: 2,
                stride: 2,
            },
            vec![x],
        );
    }
    let mut taps = Vec::with_capacity(ladder.len());
    for stage in 0..built_stages {
        let out = cfg.stage_channels[stage];
        for block in 0..cfg.stage_blocks[stage] {
            let stride = match (stage, block) {
                (0, 0) => stage0_stride,
                (_, 0) => 2,
                _ => 1,
            };
            x = b.basic_block(
                &format!("stage{}.block{}", stage + 1, block),
                x,
                out,
                stride,
                block == 0,
            );
        }
        if stage >= first {
            taps.push(x);
        }
    }
    for (i, &t) in ladder[stage_taps..].iter().enumerate() {
        x = b.extra_block(&format!("extra{}", i + 1), x, cfg.extra_channels, t)?;
        taps.push(x);
    }
    let spec = b.finish(cfg.input_size, taps);
    debug_assert_eq!(&spec.tap_sizes(), ladder);
    Ok(spec)
}

/// A standalone root block: `depth` convs from `in_channels` to `channels`.
pub fn build_root_block(
    depth: usize,
    kernel: usize,
    stride: usize,
    in_channels: usize,
    channels: usize,
    input_size: usize,
    bn: bool,
) -> Result<NetworkSpec> {
    let mut b = SpecBuilder::new(in_channels, input_size, bn);
    let out = b.root(0, depth, kernel, stride, channels)?;
    Ok(b.finish(input_size, vec![out]))
}

/// A chain of residual extra blocks, one per entry of `targets`, each tapped.
pub fn build_extra_blocks(
    in_channels: usize,
    input_size: usize,
    targets: &[usize],
    channels: usize,
    bn: bool,
) -> Result<NetworkSpec> {
    if targets.is_empty() {
        return Err(Error::Config("need at least one extra block".into()));
    }
    let mut b = SpecBuilder::new(in_channels, input_size, bn);
    let mut x = 0;
    let mut taps = Vec::new();
    for (i, &t) in targets.iter().enumerate() {
        x = b.extra_block(&format!("extra{}", i + 1), x, channels, t)?;
        taps.push(x);
    }
    Ok(b.finish(input_size, taps))
}
