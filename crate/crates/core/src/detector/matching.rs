use serde::{Deserialize, Serialize};

use super::anchors::AnchorSet;
use super::boxes::{encode_box, iou, to_corners, Corners};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnchorMatch {
    /// Matched to this ground-truth index.
    Positive(usize),
    Negative,
    /// Excluded from both losses.
    Ignored,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchResult {
    pub anchors: Vec<AnchorMatch>,
    /// The anchor each ground truth claimed in the bipartite step.
    pub bipartite: Vec<usize>,
}

impl MatchResult {
    pub fn num_positive(&self) -> usize {
        self.anchors
            .iter()
            .filter(|m| matches!(m, AnchorMatch::Positive(_)))
            .count()
    }
}

/// One labelled ground-truth box (class ≥ 1, normalized corners).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtBox {
    pub class: usize,
    pub bbox: Corners,
}

/// Training target of one anchor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnchorTarget {
    Positive { class: usize, offsets: [f64; 4] },
    Negative,
    Ignored,
}

pub fn match_anchors(anchors: &AnchorSet, gts: &[Corners], pos_threshold: f64) -> MatchResult {
    match_anchors_with_ignore(anchors, gts, pos_threshold, None)
}

/// SSD matching.
///
/// Bipartite step: repeatedly take the highest-IoU (ground truth, anchor) pair
/// among unclaimed ground truths and anchors (ties: lowest anchor, then lowest
/// ground truth). Then every unclaimed anchor whose best IoU reaches
/// `pos_threshold` is positive to its best ground truth. With `ignore_from`,
/// remaining anchors whose best IoU is at least that value are ignored rather
/// than negative.
pub fn match_anchors_with_ignore(
    anchors: &AnchorSet,
    gts: &[Corners],
    pos_threshold: f64,
    ignore_from: Option<f64>,
) -> MatchResult {
    let a = anchors.len();
    let corners: Vec<Corners> = anchors.boxes.iter().map(to_corners).collect();
    let overlaps: Vec<Vec<f64>> = gts
        .iter()
        .map(|g| corners.iter().map(|c| iou(g, c)).collect())
        .collect();

    let mut result = vec![AnchorMatch::Negative; a];
    let mut claimed = vec![false; a];
    let mut bipartite = vec![usize::MAX; gts.len()];
    for _ in 0..gts.len().min(a) {
        let mut best: Option<(f64, usize, usize)> = None;
        for (g, row) in overlaps.iter().enumerate() {
            if bipartite[g] != usize::MAX {
                continue;
            }
            for (j, &v) in row.iter().enumerate() {
                if claimed[j] {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bv, bj, _)) => v > bv || (v == bv && j < bj),
                };
                if better {
                    best = Some((v, j, g));
                }
            }
        }
        let Some((_, j, g)) = best else { break };
        claimed[j] = true;
        bipartite[g] = j;
        result[j] = AnchorMatch::Positive(g);
    }

    for j in 0..a {
        if claimed[j] || gts.is_empty() {
            continue;
        }
        let (mut bg, mut bv) = (0, overlaps[0][j]);
        for (g, row) in overlaps.iter().enumerate().skip(1) {
            if row[j] > bv {
                bg = g;
                bv = row[j];
            }
        }
        if bv >= pos_threshold {
            result[j] = AnchorMatch::Positive(bg);
        } else if ignore_from.is_some_and(|t| bv >= t) {
            result[j] = AnchorMatch::Ignored;
        }
    }
    MatchResult {
        anchors: result,
        bipartite,
    }
}

/// Matches and encodes the ground truth of one image.
pub fn build_targets(
    anchors: &AnchorSet,
    gts: &[GtBox],
    pos_threshold: f64,
) -> Result<Vec<AnchorTarget>> {
    let boxes: Vec<Corners> = gts.iter().map(|g| g.bbox).collect();
    let m = match_anchors(anchors, &boxes, pos_threshold);
    m.anchors
        .iter()
        .zip(&anchors.boxes)
        .map(|(m, anchor)| {
            Ok(match *m {
                AnchorMatch::Positive(g) => AnchorTarget::Positive {
                    class: gts[g].class,
                    offsets: encode_box(&gts[g].bbox, anchor, anchors.variances)?,
                },
                AnchorMatch::Negative => AnchorTarget::Negative,
                AnchorMatch::Ignored => AnchorTarget::Ignored,
            })
        })
        .collect()
}
