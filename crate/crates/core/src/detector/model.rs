use super::anchors::{generate_anchors, linear_scales, AnchorSet};
use super::detect::{detect, DetectConfig, Detection};
use super::head::{Head, HeadCache, HeadConfig, HeadOutput};
use super::matching::AnchorTarget;
use super::multibox::multibox_loss;
use crate::backbone::{build_backbone, BackboneConfig, ForwardCache, Network, NetworkSpec};
use crate::error::Result;
use crate::nn::{BatchNormState, LossBreakdown, Mode, ParamTensor};
use crate::tensor::{SeededRng, Tensor};

/// Backbone, head and anchors of one single-shot detector.
#[derive(Clone, Debug)]
pub struct Detector {
    backbone: Network,
    head: Head,
    anchors: AnchorSet,
}

pub struct DetectorCache {
    backbone: ForwardCache,
    head: HeadCache,
}

impl Detector {
    /// Backbone weights are drawn first, then the head, from the same stream.
    pub fn new(backbone: &BackboneConfig, head: &HeadConfig, rng: &mut SeededRng) -> Result<Self> {
        Self::from_spec(build_backbone(backbone)?, head, rng)
    }

    pub fn from_spec(spec: NetworkSpec, head: &HeadConfig, rng: &mut SeededRng) -> Result<Self> {
        head.validate()?;
        let ladder = spec.tap_sizes();
        let anchors = generate_anchors(
            &ladder,
            &linear_scales(ladder.len(), head.min_scale, head.max_scale),
            &head.aspect_ratios,
        )?;
        let tap_channels = spec.tap_channels();
        let backbone = Network::new(spec, rng)?;
        let head = Head::new(head, &tap_channels, rng)?;
        Ok(Detector {
            backbone,
            head,
            anchors,
        })
    }

    pub fn anchors(&self) -> &AnchorSet {
        &self.anchors
    }

    pub fn spec(&self) -> &NetworkSpec {
        self.backbone.spec()
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn backbone(&self) -> &Network {
        &self.backbone
    }

    pub fn forward(&mut self, batch: &Tensor, mode: Mode) -> Result<(HeadOutput, DetectorCache)> {
        let (pyramid, bcache) = self.backbone.forward_pyramid(batch, mode)?;
        let (out, hcache) = self.head.forward(&pyramid, mode)?;
        Ok((
            out,
            DetectorCache {
                backbone: bcache,
                head: hcache,
            },
        ))
    }

    /// Accumulates parameter gradients; returns the input gradient when `want_input`.
    pub fn backward(
        &mut self,
        cache: &DetectorCache,
        grad_loc: &Tensor,
        grad_cls: &Tensor,
        want_input: bool,
    ) -> Result<Option<Tensor>> {
        let tap_grads = self.head.backward(&cache.head, grad_loc, grad_cls)?;
        self.backbone
            .backward(&cache.backbone, &tap_grads, want_input)
    }

    /// Train-mode forward, multibox loss and backward. Gradients accumulate into the parameters.
    pub fn loss_and_backward(
        &mut self,
        batch: &Tensor,
        targets: &[Vec<AnchorTarget>],
        neg_pos_ratio: usize,
    ) -> Result<LossBreakdown> {
        let (out, cache) = self.forward(batch, Mode::Train)?;
        let (loss, gl, gc) = multibox_loss(&out.loc, &out.cls, targets, neg_pos_ratio)?;
        drop(out);
        self.backward(&cache, &gl, &gc, false)?;
        Ok(loss)
    }

    /// Inference-mode detections for every image of the batch.
    pub fn predict(&mut self, batch: &Tensor, cfg: &DetectConfig) -> Result<Vec<Vec<Detection>>> {
        let (out, _) = self.forward(batch, Mode::Inference)?;
        let n = batch.shape()[0];
        let a = self.anchors.len();
        let k = self.head.config().num_classes;
        Ok((0..n)
            .map(|i| {
                detect(
                    &out.loc.data()[i * a * 4..(i + 1) * a * 4],
                    &out.cls.data()[i * a * k..(i + 1) * a * k],
                    &self.anchors,
                    cfg,
                )
            })
            .collect())
    }

    /// Backbone parameters in node order, then head parameters level by level.
    pub fn params(&self) -> Vec<&ParamTensor> {
        let mut p = self.backbone.params();
        p.extend(self.head.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut p = self.backbone.params_mut();
        p.extend(self.head.params_mut());
        p
    }

    pub fn batchnorms(&self) -> Vec<&BatchNormState> {
        let mut b = self.backbone.batchnorms();
        b.extend(self.head.batchnorms());
        b
    }

    pub fn batchnorms_mut(&mut self) -> Vec<&mut BatchNormState> {
        let mut b = self.backbone.batchnorms_mut();
        b.extend(self.head.batchnorms_mut());
        b
    }

    pub fn zero_grad(&mut self) {
        self.params_mut()
            .into_iter()
            .for_each(ParamTensor::zero_grad);
    }
}
