use serde::{Deserialize, Serialize};

use super::scene::{PixelBox, Sample};
use crate::detector::iou;
use crate::tensor::SeededRng;

/// Which augmentations run, in the order hflip → ssd_crop → photometric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentPolicy {
    pub hflip: bool,
    pub ssd_crop: bool,
    pub photometric: bool,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            hflip: true,
            ssd_crop: true,
            photometric: true,
        }
    }
}

impl AugmentPolicy {
    pub fn none() -> Self {
        AugmentPolicy {
            hflip: false,
            ssd_crop: false,
            photometric: false,
        }
    }
}

/// Minimum-IoU options of the crop sampler; `None` accepts any patch.
pub const CROP_MIN_IOUS: [Option<f64>; 6] =
    [None, Some(0.1), Some(0.3), Some(0.5), Some(0.7), Some(0.9)];
pub const CROP_ATTEMPTS: usize = 50;
pub const PHOTOMETRIC_RANGE: f64 = 0.125;

pub fn augment(sample: &Sample, rng: &mut SeededRng, policy: &AugmentPolicy) -> Sample {
    let mut s = sample.clone();
    if policy.hflip && rng.bernoulli(0.5) {
        s = hflip(&s);
    }
    if policy.ssd_crop {
        s = ssd_crop(&s, rng);
    }
    if policy.photometric {
        photometric(&mut s, rng);
    }
    s
}

/// Mirrors the image left-right; a box `[x1, x2]` becomes `[W − x2, W − x1]`.
pub fn hflip(s: &Sample) -> Sample {
    let (w, h) = (s.width, s.height);
    let mut pixels = vec![0u8; s.pixels.len()];
    for y in 0..h {
        for x in 0..w {
            let src = (y * w + x) * 3;
            let dst = (y * w + (w - 1 - x)) * 3;
            pixels[dst..dst + 3].copy_from_slice(&s.pixels[src..src + 3]);
        }
    }
    let wf = w as f64;
    Sample {
        id: s.id.clone(),
        width: w,
        height: h,
        pixels,
        boxes: s
            .boxes
            .iter()
            .map(|b| PixelBox {
                x1: wf - b.x2,
                x2: wf - b.x1,
                ..*b
            })
            .collect(),
    }
}

/// SSD random crop. Draws a min-IoU option, then up to [`CROP_ATTEMPTS`] patches
/// with sides in `[0.3, 1]` of the image and aspect in `[1/2, 2]`. A patch is
/// accepted when some box overlaps it by the drawn IoU (any patch for `None`)
/// and at least one box centre lies inside. Kept boxes are those with centres
/// inside, clipped to the patch; the patch is resized back to the original size.
/// Returns the input unchanged if no attempt succeeds.
pub fn ssd_crop(s: &Sample, rng: &mut SeededRng) -> Sample {
    let min_iou = CROP_MIN_IOUS[rng.below(CROP_MIN_IOUS.len())];
    let (w, h) = (s.width as f64, s.height as f64);
    for _ in 0..CROP_ATTEMPTS {
        let cw = (rng.uniform_range(0.3, 1.0) * w).round().max(1.0);
        let ch = (rng.uniform_range(0.3, 1.0) * h).round().max(1.0);
        if ch / cw < 0.5 || ch / cw > 2.0 {
            continue;
        }
        let left = (rng.uniform() * (w - cw)).round();
        let top = (rng.uniform() * (h - ch)).round();
        let rect = [left, top, left + cw, top + ch];
        if let Some(t) = min_iou {
            let best = s
                .boxes
                .iter()
                .map(|b| iou(&[b.x1, b.y1, b.x2, b.y2], &rect))
                .fold(0.0, f64::max);
            if best < t {
                continue;
            }
        }
        let kept: Vec<PixelBox> = s
            .boxes
            .iter()
            .filter(|b| {
                let (cx, cy) = ((b.x1 + b.x2) / 2.0, (b.y1 + b.y2) / 2.0);
                cx > rect[0] && cx < rect[2] && cy > rect[1] && cy < rect[3]
            })
            .copied()
            .collect();
        if kept.is_empty() && !s.boxes.is_empty() {
            continue;
        }
        let (sx, sy) = (w / cw, h / ch);
        let boxes = kept
            .iter()
            .map(|b| PixelBox {
                class: b.class,
                x1: (b.x1.max(rect[0]) - left) * sx,
                y1: (b.y1.max(rect[1]) - top) * sy,
                x2: (b.x2.min(rect[2]) - left) * sx,
                y2: (b.y2.min(rect[3]) - top) * sy,
            })
            .collect();
        return Sample {
            id: s.id.clone(),
            width: s.width,
            height: s.height,
            pixels: resize_crop(s, left as usize, top as usize, cw as usize, ch as usize),
            boxes,
        };
    }
    s.clone()
}

/// Bilinear resize of the patch `(left, top, cw, ch)` to the full image size.
fn resize_crop(s: &Sample, left: usize, top: usize, cw: usize, ch: usize) -> Vec<u8> {
    let (w, h) = (s.width, s.height);
    let px = |x: usize, y: usize, c: usize| s.pixels[((top + y) * w + left + x) * 3 + c] as f64;
    let mut out = vec![0u8; w * h * 3];
    for y in 0..h {
        let fy = ((y as f64 + 0.5) * ch as f64 / h as f64 - 0.5).clamp(0.0, (ch - 1) as f64);
        let (y0, ty) = (fy.floor() as usize, fy - fy.floor());
        let y1 = (y0 + 1).min(ch - 1);
        for x in 0..w {
            let fx = ((x as f64 + 0.5) * cw as f64 / w as f64 - 0.5).clamp(0.0, (cw - 1) as f64);
            let (x0, tx) = (fx.floor() as usize, fx - fx.floor());
            let x1 = (x0 + 1).min(cw - 1);
            for c in 0..3 {
                let top_row = px(x0, y0, c) * (1.0 - tx) + px(x1, y0, c) * tx;
                let bottom = px(x0, y1, c) * (1.0 - tx) + px(x1, y1, c) * tx;
                out[(y * w + x) * 3 + c] = (top_row * (1.0 - ty) + bottom * ty)
                    .round()
                    .clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

/// Contrast (about mid-grey) and brightness jitter, each within ±12.5%.
pub fn photometric(s: &mut Sample, rng: &mut SeededRng) {
    let contrast = 1.0 + rng.uniform_range(-PHOTOMETRIC_RANGE, PHOTOMETRIC_RANGE);
    let brightness = rng.uniform_range(-PHOTOMETRIC_RANGE, PHOTOMETRIC_RANGE) * 255.0;
    for v in &mut s.pixels {
        *v = ((*v as f64 - 127.5) * contrast + 127.5 + brightness)
            .round()
            .clamp(0.0, 255.0) as u8;
    }
}
