//! Box geometry. Corner boxes are `[x_min, y_min, x_max, y_max]`, center boxes
//! `[cx, cy, w, h]`, both in normalized image coordinates.

use crate::error::{Error, Result};

pub type Corners = [f64; 4];
pub type CenterBox = [f64; 4];

/// Default encode variances `(v_center, v_size)`.
pub const DEFAULT_VARIANCES: (f64, f64) = (0.1, 0.2);

pub fn area(b: &Corners) -> f64 {
    (b[2] - b[0]).max(0.0) * (b[3] - b[1]).max(0.0)
}

/// Intersection over union; 0 for disjoint boxes or when either box has zero area.
pub fn iou(a: &Corners, b: &Corners) -> f64 {
    let (aa, ab) = (area(a), area(b));
    if aa <= 0.0 || ab <= 0.0 {
        log::debug!("iou of degenerate box {a:?} / {b:?} taken as 0");
        return 0.0;
    }
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (aa + ab - inter)
}

pub fn to_corners(c: &CenterBox) -> Corners {
    [
        c[0] - c[2] / 2.0,
        c[1] - c[3] / 2.0,
        c[0] + c[2] / 2.0,
        c[1] + c[3] / 2.0,
    ]
}

pub fn to_center(b: &Corners) -> CenterBox {
    [
        (b[0] + b[2]) / 2.0,
        (b[1] + b[3]) / 2.0,
        b[2] - b[0],
        b[3] - b[1],
    ]
}

pub fn clip_unit(b: &Corners) -> Corners {
    b.map(|v| v.clamp(0.0, 1.0))
}

/// SSD offset encoding of `gt` relative to `anchor`.
pub fn encode_box(gt: &Corners, anchor: &CenterBox, variances: (f64, f64)) -> Result<[f64; 4]> {
    let g = to_center(gt);
    if !(g[2] > 0.0 && g[3] > 0.0) {
        return Err(Error::Sample(format!(
            "ground-truth box {gt:?} has non-positive size"
        )));
    }
    if !(anchor[2] > 0.0 && anchor[3] > 0.0) {
        return Err(Error::Contract(format!(
            "anchor {anchor:?} has non-positive size"
        )));
    }
    let (vc, vs) = variances;
    Ok([
        (g[0] - anchor[0]) / anchor[2] / vc,
        (g[1] - anchor[1]) / anchor[3] / vc,
        (g[2] / anchor[2]).ln() / vs,
        (g[3] / anchor[3]).ln() / vs,
    ])
}

/// Inverse of [`encode_box`].
pub fn decode_box(t: &[f64], anchor: &CenterBox, variances: (f64, f64)) -> Corners {
    let (vc, vs) = variances;
    to_corners(&[
        anchor[0] + t[0] * vc * anchor[2],
        anchor[1] + t[1] * vc * anchor[3],
        anchor[2] * (t[2] * vs).exp(),
        anchor[3] * (t[3] * vs).exp(),
    ])
}
