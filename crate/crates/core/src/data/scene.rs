use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Disk,
    Square,
    Triangle,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundConfig {
    /// Per-pixel uniform noise amplitude in grey levels.
    pub noise_amplitude: f64,
    /// Amplitude of the low-frequency texture wave in grey levels.
    pub texture_amplitude: f64,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        BackgroundConfig {
            noise_amplitude: 18.0,
            texture_amplitude: 20.0,
        }
    }
}

/// Synthetic scene generator settings. Class ids are `index in classes + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub image_size: usize,
    pub num_images: usize,
    pub classes: Vec<ShapeKind>,
    /// Inclusive range.
    pub objects_per_image: (usize, usize),
    /// Shape side as a fraction of the image side.
    pub size_distribution: (f64, f64),
    /// Target fraction of boxes whose normalized area falls below `small_area`.
    pub small_object_fraction: f64,
    #[serde(default = "default_small_area")]
    pub small_area: f64,
    #[serde(default)]
    pub background: BackgroundConfig,
    /// Fraction of images (taken from the end) forming the eval split.
    #[serde(default = "default_eval_fraction")]
    pub eval_fraction: f64,
    pub seed: u64,
}

fn default_small_area() -> f64 {
    0.01
}

fn default_eval_fraction() -> f64 {
    0.2
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            image_size: 96,
            num_images: 1000,
            classes: vec![ShapeKind::Disk, ShapeKind::Square, ShapeKind::Triangle],
            objects_per_image: (1, 6),
            size_distribution: (0.06, 0.4),
            small_object_fraction: 0.5,
            small_area: 0.01,
            background: BackgroundConfig::default(),
            eval_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Largest allowed pairwise IoU between objects of one image.
pub const MAX_PAIR_IOU: f64 = 0.3;
const PLACEMENT_TRIES: usize = 50;

impl SceneConfig {
    pub fn num_classes(&self) -> usize {
        self.classes.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.image_size < 8 || self.num_images == 0 || self.classes.is_empty() {
            return fail(
                "image_size ≥ 8, num_images ≥ 1 and at least one class are required".into(),
            );
        }
        let (lo, hi) = self.objects_per_image;
        if lo > hi {
            return fail(format!("objects_per_image range ({lo}, {hi}) is empty"));
        }
        let (a, b) = self.size_distribution;
        if !(0.0 < a && a < b && b < 1.0) {
            return fail(format!(
                "size_distribution ({a}, {b}) must satisfy 0 < min < max < 1"
            ));
        }
        if !(0.0 < self.small_object_fraction && self.small_object_fraction < 1.0) {
            return fail("small_object_fraction must lie in (0, 1)".into());
        }
        let split = self.small_area.sqrt();
        if !(a < split && split < b) {
            return fail(format!(
                "size_distribution ({a}, {b}) must straddle the small-box side {split:.3} for the small fraction to be reachable"
            ));
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return fail("eval_fraction must lie in [0, 1)".into());
        }
        Ok(())
    }

    pub fn eval_count(&self) -> usize {
        (self.eval_fraction * self.num_images as f64).round() as usize
    }
}

/// One labelled box in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub class: usize,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl PixelBox {
    pub fn area(&self) -> f64 {
        (self.x2 - self.x1).max(0.0) * (self.y2 - self.y1).max(0.0)
    }

    fn iou(&self, o: &PixelBox) -> f64 {
        crate::detector::iou(
            &[self.x1, self.y1, self.x2, self.y2],
            &[o.x1, o.y1, o.x2, o.y2],
        )
    }
}

/// An RGB image with its annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub width: usize,
    pub height: usize,
    /// Row-major interleaved RGB.
    pub pixels: Vec<u8>,
    pub boxes: Vec<PixelBox>,
}

pub fn image_id(index: usize) -> String {
    format!("img_{index:05}")
}

/// Renders image `index`; a pure function of `(cfg, index)`.
// 6.283 is part of the texture definition; changing it changes every dataset digest.
#[allow(clippy::approx_constant)]
pub fn generate_sample(cfg: &SceneConfig, index: usize) -> Sample {
    let mut rng = SeededRng::new(cfg.seed).split(index as u64);
    let s = cfg.image_size;
    let bg = &cfg.background;
    let base: [f64; 3] = [0; 3].map(|_| rng.uniform_range(50.0, 200.0));
    let (fx, fy) = (rng.uniform_range(0.5, 3.0), rng.uniform_range(0.5, 3.0));
    let (px, py) = (rng.uniform_range(0.0, 6.3), rng.uniform_range(0.0, 6.3));
    let mut canvas = vec![0.0f64; s * s * 3];
    for y in 0..s {
        for x in 0..s {
            let wave = ((x as f64 / s as f64 * fx * 6.283 + px).sin()
                + (y as f64 / s as f64 * fy * 6.283 + py).sin())
                / 2.0;
            for c in 0..3 {
                let noise = rng.uniform_range(-bg.noise_amplitude, bg.noise_amplitude);
                canvas[(y * s + x) * 3 + c] = base[c] + bg.texture_amplitude * wave + noise;
            }
        }
    }

    let (lo, hi) = cfg.objects_per_image;
    let count = lo + rng.below(hi - lo + 1);
    let split = cfg.small_area.sqrt();
    let (fmin, fmax) = cfg.size_distribution;
    let mut boxes: Vec<PixelBox> = Vec::with_capacity(count);
    for _ in 0..count {
        let class = 1 + rng.below(cfg.classes.len());
        let small = rng.bernoulli(cfg.small_object_fraction);
        let mut placed = None;
        for _ in 0..PLACEMENT_TRIES {
            // strictly inside each bucket so rounding never flips it
            let frac = if small {
                rng.uniform_range(fmin, split * 0.97)
            } else {
                rng.uniform_range(split * 1.03, fmax)
            };
            let side = frac * s as f64;
            let x1 = rng.uniform_range(0.0, s as f64 - side);
            let y1 = rng.uniform_range(0.0, s as f64 - side);
            let b = PixelBox {
                class,
                x1,
                y1,
                x2: x1 + side,
                y2: y1 + side,
            };
            if boxes.iter().all(|o| o.iou(&b) <= MAX_PAIR_IOU) {
                placed = Some(b);
                break;
            }
        }
        let Some(b) = placed else { continue };
        let color = object_color(&mut rng, &base);
        render_shape(&mut canvas, s, s, cfg.classes[class - 1], &b, color);
        boxes.push(b);
    }
    Sample {
        id: image_id(index),
        width: s,
        height: s,
        pixels: canvas
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8)
            .collect(),
        boxes,
    }
}

fn object_color(rng: &mut SeededRng, base: &[f64; 3]) -> [f64; 3] {
    loop {
        let c: [f64; 3] = [0; 3].map(|_| rng.uniform_range(0.0, 255.0));
        let contrast = c
            .iter()
            .zip(base)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if contrast >= 70.0 {
            return c;
        }
    }
}

const SUPERSAMPLE: usize = 4;

/// Whether the point lies inside a shape whose bounding box is `b`.
pub fn shape_contains(kind: ShapeKind, b: &PixelBox, x: f64, y: f64) -> bool {
    match kind {
        ShapeKind::Square => x >= b.x1 && x <= b.x2 && y >= b.y1 && y <= b.y2,
        ShapeKind::Disk => {
            let (cx, cy) = ((b.x1 + b.x2) / 2.0, (b.y1 + b.y2) / 2.0);
            let r = (b.x2 - b.x1) / 2.0;
            (x - cx).powi(2) + (y - cy).powi(2) <= r * r
        }
        ShapeKind::Triangle => {
            // apex at top centre, base along the bottom edge
            if y < b.y1 || y > b.y2 {
                return false;
            }
            let t = (y - b.y1) / (b.y2 - b.y1);
            let half = t * (b.x2 - b.x1) / 2.0;
            let cx = (b.x1 + b.x2) / 2.0;
            x >= cx - half && x <= cx + half
        }
    }
}

/// Composites an anti-aliased shape (4×4 supersampled coverage) onto `canvas`.
pub fn render_shape(
    canvas: &mut [f64],
    width: usize,
    height: usize,
    kind: ShapeKind,
    b: &PixelBox,
    color: [f64; 3],
) {
    let x0 = b.x1.floor().max(0.0) as usize;
    let y0 = b.y1.floor().max(0.0) as usize;
    let x1 = (b.x2.ceil() as usize).min(width);
    let y1 = (b.y2.ceil() as usize).min(height);
    let n = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    for py in y0..y1 {
        for px in x0..x1 {
            let mut hits = 0;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let x = px as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64;
                    let y = py as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64;
                    hits += usize::from(shape_contains(kind, b, x, y));
                }
            }
            if hits == 0 {
                continue;
            }
            let cov = hits as f64 / n;
            for c in 0..3 {
                let v = &mut canvas[(py * width + px) * 3 + c];
                *v = *v * (1.0 - cov) + color[c] * cov;
            }
        }
    }
}
