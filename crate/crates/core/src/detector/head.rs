use serde::{Deserialize, Serialize};

use crate::backbone::FeaturePyramid;
use crate::error::{Error, Result};
use crate::nn::{
    batchnorm_backward, batchnorm_forward, BatchNormState, BnCache, Conv2d, Mode, ParamTensor,
};
use crate::tensor::{SeededRng, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadConfig {
    pub bn_in_head: bool,
    #[serde(default = "default_anchors_per_cell")]
    pub anchors_per_cell: usize,
    /// Including background class 0.
    pub num_classes: usize,
    #[serde(default = "default_min_scale")]
    pub min_scale: f64,
    #[serde(default = "default_max_scale")]
    pub max_scale: f64,
    #[serde(default = "default_ratios")]
    pub aspect_ratios: Vec<f64>,
}

fn default_anchors_per_cell() -> usize {
    4
}
fn default_min_scale() -> f64 {
    0.15
}
fn default_max_scale() -> f64 {
    0.9
}
fn default_ratios() -> Vec<f64> {
    vec![1.0, 2.0, 0.5]
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            bn_in_head: true,
            anchors_per_cell: 4,
            num_classes: 4,
            min_scale: 0.15,
            max_scale: 0.9,
            aspect_ratios: default_ratios(),
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes must be ≥ 2, got {}",
                self.num_classes
            )));
        }
        if self.anchors_per_cell != self.aspect_ratios.len() + 1 {
            return Err(Error::Config(format!(
                "anchors_per_cell {} must equal the ratio count {} plus the extra square anchor",
                self.anchors_per_cell,
                self.aspect_ratios.len()
            )));
        }
        if !(0.0 < self.min_scale && self.min_scale < self.max_scale && self.max_scale <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 < min_scale < max_scale ≤ 1, got {} and {}",
                self.min_scale, self.max_scale
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct HeadLevel {
    bn: Option<BatchNormState>,
    loc: Conv2d,
    cls: Conv2d,
}

/// Raw head outputs in anchor order: `loc (N, A, 4)`, `cls (N, A, K)`.
#[derive(Clone, Debug)]
pub struct HeadOutput {
    pub loc: Tensor,
    pub cls: Tensor,
}

#[derive(Clone, Debug)]
pub struct HeadCache {
    /// Input of the prediction convs per level.
    feats: Vec<Tensor>,
    bn: Vec<Option<BnCache>>,
}

/// Per-level prediction convs, optionally preceded by BN on the feature map.
#[derive(Clone, Debug)]
pub struct Head {
    config: HeadConfig,
    levels: Vec<HeadLevel>,
}

impl Head {
    pub fn new(config: &HeadConfig, tap_channels: &[usize], rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let a = config.anchors_per_cell;
        let levels = tap_channels
            .iter()
            .enumerate()
            .map(|(l, &c)| {
                Ok(HeadLevel {
                    bn: config
                        .bn_in_head
                        .then(|| BatchNormState::new(&format!("head{l}.bn"), c)),
                    loc: Conv2d::new(&format!("head{l}.loc"), c, 4 * a, 3, 1, 1, true, rng)?,
                    cls: Conv2d::new(
                        &format!("head{l}.cls"),
                        c,
                        config.num_classes * a,
                        3,
                        1,
                        1,
                        true,
                        rng,
                    )?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Head {
            config: config.clone(),
            levels,
        })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn num_batchnorm(&self) -> usize {
        self.levels.iter().filter(|l| l.bn.is_some()).count()
    }

    pub fn forward(
        &mut self,
        pyramid: &FeaturePyramid,
        mode: Mode,
    ) -> Result<(HeadOutput, HeadCache)> {
        if pyramid.levels.len() != self.levels.len() {
            return Err(Error::dim(
                "head_forward",
                format!(
                    "{} pyramid levels for {} head levels",
                    pyramid.levels.len(),
                    self.levels.len()
                ),
            ));
        }
        let a = self.config.anchors_per_cell;
        let k = self.config.num_classes;
        let n = pyramid.batch_size();
        let total: usize = pyramid
            .levels
            .iter()
            .map(|t| t.shape()[2] * t.shape()[3] * a)
            .sum();
        let mut loc = vec![0.0; n * total * 4];
        let mut cls = vec![0.0; n * total * k];
        let mut feats = Vec::with_capacity(self.levels.len());
        let mut bn_caches = Vec::with_capacity(self.levels.len());
        let mut offset = 0;
        for (level, x) in self.levels.iter_mut().zip(&pyramid.levels) {
            let (xn, xc, h, w) = x.dims4("head_forward")?;
            if xn != n || xc != level.loc.weight.value.shape()[1] {
                return Err(Error::dim(
                    "head_forward",
                    format!("level shape {:?} does not fit the head", x.shape()),
                ));
            }
            let feat = match level.bn.as_mut() {
                Some(bn) => {
                    let (y, cache) = batchnorm_forward(x, bn, mode)?;
                    bn_caches.push(Some(cache));
                    y
                }
                None => {
                    bn_caches.push(None);
                    x.clone()
                }
            };
            let lo = level.loc.forward(&feat)?;
            let co = level.cls.forward(&feat)?;
            Layout {
                offset,
                total,
                a,
                d: 4,
            }
            .map_to_flat(&lo, &mut loc);
            Layout {
                offset,
                total,
                a,
                d: k,
            }
            .map_to_flat(&co, &mut cls);
            offset += h * w * a;
            feats.push(feat);
        }
        Ok((
            HeadOutput {
                loc: Tensor::from_vec(&[n, total, 4], loc)?,
                cls: Tensor::from_vec(&[n, total, k], cls)?,
            },
            HeadCache {
                feats,
                bn: bn_caches,
            },
        ))
    }

    /// Accumulates head parameter gradients and returns gradients for each pyramid level.
    pub fn backward(
        &mut self,
        cache: &HeadCache,
        grad_loc: &Tensor,
        grad_cls: &Tensor,
    ) -> Result<Vec<Tensor>> {
        let a = self.config.anchors_per_cell;
        let k = self.config.num_classes;
        let n = cache.feats.first().map_or(0, |f| f.shape()[0]);
        let total: usize = cache
            .feats
            .iter()
            .map(|f| f.shape()[2] * f.shape()[3] * a)
            .sum();
        if grad_loc.shape() != [n, total, 4] || grad_cls.shape() != [n, total, k] {
            return Err(Error::dim(
                "head_backward",
                format!(
                    "gradients {:?} / {:?} for {n} images of {total} anchors",
                    grad_loc.shape(),
                    grad_cls.shape()
                ),
            ));
        }
        let mut out = Vec::with_capacity(self.levels.len());
        let mut offset = 0;
        for (l, level) in self.levels.iter_mut().enumerate() {
            let feat = &cache.feats[l];
            let (n, _, h, w) = feat.dims4("head_backward")?;
            let mut gl = Tensor::zeros(&[n, 4 * a, h, w]);
            let mut gc = Tensor::zeros(&[n, k * a, h, w]);
            Layout {
                offset,
                total,
                a,
                d: 4,
            }
            .flat_to_map(grad_loc.data(), &mut gl);
            Layout {
                offset,
                total,
                a,
                d: k,
            }
            .flat_to_map(grad_cls.data(), &mut gc);
            let mut gf = level
                .loc
                .backward(&gl, feat, true)?
                .expect("input grad requested");
            gf.add_assign(
                &level
                    .cls
                    .backward(&gc, feat, true)?
                    .expect("input grad requested"),
            )?;
            let gx = match (&mut level.bn, &cache.bn[l]) {
                (Some(bn), Some(bc)) => {
                    let g = batchnorm_backward(&gf, bc)?;
                    bn.gamma.accumulate(&g.gamma);
                    bn.beta.accumulate(&g.beta);
                    g.input
                }
                _ => gf,
            };
            out.push(gx);
            offset += h * w * a;
        }
        Ok(out)
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        let mut out = Vec::new();
        for l in &self.levels {
            if let Some(bn) = &l.bn {
                out.extend([&bn.gamma, &bn.beta]);
            }
            out.extend(l.loc.params());
            out.extend(l.cls.params());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = Vec::new();
        for l in &mut self.levels {
            if let Some(bn) = &mut l.bn {
                out.extend([&mut bn.gamma, &mut bn.beta]);
            }
            out.extend(l.loc.params_mut());
            out.extend(l.cls.params_mut());
        }
        out
    }

    pub fn batchnorms(&self) -> Vec<&BatchNormState> {
        self.levels.iter().filter_map(|l| l.bn.as_ref()).collect()
    }

    pub fn batchnorms_mut(&mut self) -> Vec<&mut BatchNormState> {
        self.levels
            .iter_mut()
            .filter_map(|l| l.bn.as_mut())
            .collect()
    }
}

/// Anchor `j` of cell `(y, x)` of a level lives at flat row `offset + (y·W + x)·a + j`;
/// in the conv map it is channels `j·d .. (j+1)·d`.
struct Layout {
    offset: usize,
    total: usize,
    a: usize,
    d: usize,
}

impl Layout {
    fn for_each(&self, map_shape: &[usize], mut f: impl FnMut(usize, usize)) {
        let [n, _, h, w] = [map_shape[0], map_shape[1], map_shape[2], map_shape[3]];
        let Layout {
            offset,
            total,
            a,
            d,
        } = *self;
        for b in 0..n {
            for j in 0..a {
                for e in 0..d {
                    for y in 0..h {
                        for x in 0..w {
                            let mi = ((b * a * d + j * d + e) * h + y) * w + x;
                            let fi = (b * total + offset + (y * w + x) * a + j) * d + e;
                            f(mi, fi);
                        }
                    }
                }
            }
        }
    }

    fn map_to_flat(&self, map: &Tensor, flat: &mut [f64]) {
        let src = map.data();
        self.for_each(map.shape(), |mi, fi| flat[fi] = src[mi]);
    }

    fn flat_to_map(&self, flat: &[f64], map: &mut Tensor) {
        let shape = map.shape().to_vec();
        let dst = map.data_mut();
        self.for_each(&shape, |mi, fi| dst[mi] = flat[fi]);
    }
}
