//! Detection evaluation: per-class AP under the VOC 11-point or all-point
//! protocol, mAP, and AP restricted to small / medium / large ground truths.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::detector::{area, iou, Corners, DetectionRecord};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeBucket {
    Small,
    Medium,
    Large,
}

/// Bucket limits on normalized box area: `< small_max` small, `< medium_max` medium, else large.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeBuckets {
    pub small_max: f64,
    pub medium_max: f64,
}

impl Default for SizeBuckets {
    fn default() -> Self {
        SizeBuckets {
            small_max: 0.01,
            medium_max: 0.09,
        }
    }
}

impl SizeBuckets {
    pub fn classify(&self, bbox: &Corners) -> SizeBucket {
        let a = area(bbox);
        if a < self.small_max {
            SizeBucket::Small
        } else if a < self.medium_max {
            SizeBucket::Medium
        } else {
            SizeBucket::Large
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub class: usize,
    pub bbox: Corners,
    pub size_bucket: SizeBucket,
}

impl GroundTruth {
    pub fn new(
        image_id: impl Into<String>,
        class: usize,
        bbox: Corners,
        buckets: &SizeBuckets,
    ) -> Self {
        GroundTruth {
            image_id: image_id.into(),
            class,
            bbox,
            size_bucket: buckets.classify(&bbox),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[default]
    Voc11,
    Allpoint,
}

/// Ranked precision/recall of one class.
#[derive(Clone, Debug, PartialEq)]
pub struct PrCurve {
    /// `(score, is_tp)` in rank order; ignored detections are left out.
    pub ranked: Vec<(f64, bool)>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub num_gt: usize,
}

impl PrCurve {
    pub fn ap(&self, protocol: Protocol) -> f64 {
        match protocol {
            Protocol::Voc11 => {
                (0..=10)
                    .map(|i| {
                        let t = i as f64 / 10.0;
                        self.recall
                            .iter()
                            .zip(&self.precision)
                            .filter(|(r, _)| **r >= t)
                            .map(|(_, p)| *p)
                            .fold(0.0, f64::max)
                    })
                    .sum::<f64>()
                    / 11.0
            }
            Protocol::Allpoint => {
                let mut mrec = vec![0.0];
                mrec.extend(&self.recall);
                mrec.push(1.0);
                let mut mpre = vec![0.0];
                mpre.extend(&self.precision);
                mpre.push(0.0);
                for i in (0..mpre.len() - 1).rev() {
                    mpre[i] = mpre[i].max(mpre[i + 1]);
                }
                (1..mrec.len())
                    .filter(|&i| mrec[i] != mrec[i - 1])
                    .map(|i| (mrec[i] - mrec[i - 1]) * mpre[i])
                    .sum()
            }
        }
    }
}

/// Builds the PR curve of `class`.
///
/// Detections are ranked by descending score (ties keep input order). Each takes
/// its highest-IoU unmatched same-image, same-class ground truth with IoU at
/// least `iou_threshold` (ties: lower index), giving a TP; otherwise, if it
/// overlaps an ignored ground truth by at least the threshold, it is dropped;
/// otherwise it is a FP. Returns `None` when the class has no counted ground truth.
pub fn pr_curve<F>(
    dets: &[DetectionRecord],
    gts: &[GroundTruth],
    class: usize,
    iou_threshold: f64,
    ignore: F,
) -> Option<PrCurve>
where
    F: Fn(&GroundTruth) -> bool,
{
    let mut by_image: HashMap<&str, Vec<(&GroundTruth, bool)>> = HashMap::new();
    let mut num_gt = 0;
    for g in gts.iter().filter(|g| g.class == class) {
        let ignored = ignore(g);
        num_gt += usize::from(!ignored);
        by_image
            .entry(g.image_id.as_str())
            .or_default()
            .push((g, ignored));
    }
    if num_gt == 0 {
        return None;
    }
    let mut order: Vec<&DetectionRecord> = dets.iter().filter(|d| d.class == class).collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut used: HashMap<&str, Vec<bool>> = by_image
        .iter()
        .map(|(k, v)| (*k, vec![false; v.len()]))
        .collect();
    let mut ranked = Vec::with_capacity(order.len());
    for d in order {
        let Some(cands) = by_image.get(d.image_id.as_str()) else {
            ranked.push((d.score, false));
            continue;
        };
        let taken = used.get_mut(d.image_id.as_str()).unwrap();
        let mut best: Option<(usize, f64)> = None;
        let mut hits_ignored = false;
        for (i, (g, ignored)) in cands.iter().enumerate() {
            let o = iou(&d.bbox, &g.bbox);
            if o < iou_threshold {
                continue;
            }
            if *ignored {
                hits_ignored = true;
            } else if !taken[i] && best.is_none_or(|(_, bo)| o > bo) {
                best = Some((i, o));
            }
        }
        match best {
            Some((i, _)) => {
                taken[i] = true;
                ranked.push((d.score, true));
            }
            None if hits_ignored => {}
            None => ranked.push((d.score, false)),
        }
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut precision = Vec::with_capacity(ranked.len());
    let mut recall = Vec::with_capacity(ranked.len());
    for &(_, is_tp) in &ranked {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(tp as f64 / num_gt as f64);
    }
    Some(PrCurve {
        ranked,
        precision,
        recall,
        num_gt,
    })
}

pub fn average_precision(
    dets: &[DetectionRecord],
    gts: &[GroundTruth],
    class: usize,
    iou_threshold: f64,
    protocol: Protocol,
) -> Option<f64> {
    pr_curve(dets, gts, class, iou_threshold, |_| false).map(|c| c.ap(protocol))
}

/// AP counting only ground truths of `bucket`; the rest are ignored.
pub fn size_bucketed_ap(
    dets: &[DetectionRecord],
    gts: &[GroundTruth],
    class: usize,
    bucket: SizeBucket,
    iou_threshold: f64,
    protocol: Protocol,
) -> Option<f64> {
    pr_curve(dets, gts, class, iou_threshold, |g| g.size_bucket != bucket).map(|c| c.ap(protocol))
}

pub fn mean_ap(per_class: &BTreeMap<usize, f64>) -> Result<f64> {
    if per_class.is_empty() {
        return Err(Error::Contract("mean AP over no defined class".into()));
    }
    Ok(per_class.values().sum::<f64>() / per_class.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default = "default_iou")]
    pub iou_threshold: f64,
    #[serde(default)]
    pub buckets: SizeBuckets,
}

fn default_iou() -> f64 {
    0.5
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            protocol: Protocol::Voc11,
            iou_threshold: 0.5,
            buckets: SizeBuckets::default(),
        }
    }
}

/// Evaluation summary. Undefined values (no ground truth) are `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class_ap: BTreeMap<usize, Option<f64>>,
    pub map: Option<f64>,
    pub ap_small: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
}

/// Full report over classes `1..num_classes`. Bucketed APs are averaged over the
/// classes where they are defined.
pub fn evaluate(
    dets: &[DetectionRecord],
    gts: &[GroundTruth],
    num_classes: usize,
    cfg: &EvalConfig,
) -> EvalReport {
    let classes = 1..num_classes;
    let mut per_class_ap = BTreeMap::new();
    let mut defined = BTreeMap::new();
    for c in classes.clone() {
        let ap = average_precision(dets, gts, c, cfg.iou_threshold, cfg.protocol);
        match ap {
            Some(v) => {
                defined.insert(c, v);
            }
            None => log::warn!("class {c} has no ground truth; excluded from mAP"),
        }
        per_class_ap.insert(c, ap);
    }
    let bucket_mean = |bucket| {
        let m: BTreeMap<usize, f64> = classes
            .clone()
            .filter_map(|c| {
                size_bucketed_ap(dets, gts, c, bucket, cfg.iou_threshold, cfg.protocol)
                    .map(|v| (c, v))
            })
            .collect();
        mean_ap(&m).ok()
    };
    EvalReport {
        per_class_ap,
        map: mean_ap(&defined).ok(),
        ap_small: bucket_mean(SizeBucket::Small),
        ap_medium: bucket_mean(SizeBucket::Medium),
        ap_large: bucket_mean(SizeBucket::Large),
    }
}
