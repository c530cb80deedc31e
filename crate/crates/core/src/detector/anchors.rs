use serde::{Deserialize, Serialize};

use super::boxes::{CenterBox, DEFAULT_VARIANCES};
use crate::error::{Error, Result};

/// Anchors of one detection layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorLevel {
    pub grid: usize,
    /// `(w, h)` of each anchor in a cell, in cell order.
    pub shapes: Vec<(f64, f64)>,
}

/// Default boxes of every detection layer, flattened level → row → column → anchor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub levels: Vec<AnchorLevel>,
    pub boxes: Vec<CenterBox>,
    pub variances: (f64, f64),
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Index of the first anchor of each level.
    pub fn level_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.levels
            .iter()
            .map(|l| {
                let o = acc;
                acc += l.grid * l.grid * l.shapes.len();
                o
            })
            .collect()
    }
}

/// Linear scales from `min` to `max` over `levels` entries, plus one extrapolated
/// entry (capped at 1) that feeds the extra square anchor of the last level.
pub fn linear_scales(levels: usize, min: f64, max: f64) -> Vec<f64> {
    if levels == 1 {
        return vec![min, ((min + max) / 2.0).min(1.0)];
    }
    let step = (max - min) / (levels - 1) as f64;
    let mut s: Vec<f64> = (0..levels).map(|k| min + step * k as f64).collect();
    s.push((max + step).min(1.0));
    s
}

/// Builds the SSD default boxes.
///
/// `scales` has one entry per level plus one: level `k` gets one anchor per ratio
/// at scale `s_k` (`w = s·√r`, `h = s/√r`), then a square anchor at `√(s_k·s_{k+1})`.
/// Centers sit at `((x + 0.5)/grid, (y + 0.5)/grid)`.
pub fn generate_anchors(ladder: &[usize], scales: &[f64], ratios: &[f64]) -> Result<AnchorSet> {
    if scales.len() != ladder.len() + 1 {
        return Err(Error::Config(format!(
            "{} scales for {} levels; need one per level plus one",
            scales.len(),
            ladder.len()
        )));
    }
    if scales.iter().any(|&s| !(s > 0.0 && s <= 1.0)) || scales.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "scales {scales:?} must be strictly increasing in (0, 1]"
        )));
    }
    if ratios.is_empty() || ratios.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::Config(format!(
            "aspect ratios {ratios:?} must be positive"
        )));
    }
    if ladder.contains(&0) {
        return Err(Error::Config("ladder sizes must be positive".into()));
    }
    let mut levels = Vec::with_capacity(ladder.len());
    let mut boxes = Vec::new();
    for (k, &grid) in ladder.iter().enumerate() {
        let s = scales[k];
        let mut shapes: Vec<(f64, f64)> = ratios
            .iter()
            .map(|&r| (s * r.sqrt(), s / r.sqrt()))
            .collect();
        let extra = (s * scales[k + 1]).sqrt();
        shapes.push((extra, extra));
        for y in 0..grid {
            for x in 0..grid {
                let cx = (x as f64 + 0.5) / grid as f64;
                let cy = (y as f64 + 0.5) / grid as f64;
                boxes.extend(shapes.iter().map(|&(w, h)| [cx, cy, w, h]));
            }
        }
        levels.push(AnchorLevel { grid, shapes });
    }
    Ok(AnchorSet {
        levels,
        boxes,
        variances: DEFAULT_VARIANCES,
    })
}
