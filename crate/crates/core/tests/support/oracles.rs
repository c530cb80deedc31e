//! Brute-force reference implementations, written independently of the
//! library, and randomized instance generators that compare the two.
//!
//! Coordinates are drawn on a coarse grid so ties in IoU and score occur often.

use std::collections::BTreeMap;

use scratchdet::detector::{
    detect, match_anchors_with_ignore, nms, AnchorMatch, AnchorSet, DetectConfig, DetectionRecord,
    DEFAULT_VARIANCES,
};
use scratchdet::evalkit::{
    average_precision, evaluate, size_bucketed_ap, EvalConfig, GroundTruth, Protocol, SizeBucket,
    SizeBuckets,
};
use scratchdet::tensor::SeededRng;

type Box4 = [f64; 4];

fn ref_iou(a: &Box4, b: &Box4) -> f64 {
    let len = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 0.0 };
    let (wa, ha) = (len(a[0], a[2]), len(a[1], a[3]));
    let (wb, hb) = (len(b[0], b[2]), len(b[1], b[3]));
    if wa * ha == 0.0 || wb * hb == 0.0 {
        return 0.0;
    }
    let i = len(a[0].max(b[0]), a[2].min(b[2])) * len(a[1].max(b[1]), a[3].min(b[3]));
    if i == 0.0 {
        0.0
    } else {
        i / (wa * ha + wb * hb - i)
    }
}

fn grid_box(rng: &mut SeededRng, steps: usize) -> Box4 {
    let q = |rng: &mut SeededRng| rng.below(steps + 1) as f64 / steps as f64;
    loop {
        let (x1, x2, y1, y2) = (q(rng), q(rng), q(rng), q(rng));
        if x1 != x2 && y1 != y2 {
            return [x1.min(x2), y1.min(y2), x1.max(x2), y1.max(y2)];
        }
    }
}

fn center(b: &Box4) -> Box4 {
    [
        (b[0] + b[2]) / 2.0,
        (b[1] + b[3]) / 2.0,
        b[2] - b[0],
        b[3] - b[1],
    ]
}

fn anchor_set(boxes: Vec<Box4>) -> AnchorSet {
    AnchorSet {
        levels: vec![],
        boxes: boxes.iter().map(center).collect(),
        variances: DEFAULT_VARIANCES,
    }
}

/// Reference SSD matching: one pass over all (IoU, anchor, gt) triples sorted
/// best-first claims pairs for the bipartite step; then per-anchor thresholding.
pub fn ref_match(
    anchors: &[Box4],
    gts: &[Box4],
    pos: f64,
    ignore: Option<f64>,
) -> Vec<AnchorMatch> {
    let mut triples = Vec::new();
    for (j, a) in anchors.iter().enumerate() {
        for (g, b) in gts.iter().enumerate() {
            triples.push((ref_iou(b, a), j, g));
        }
    }
    triples.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut out = vec![AnchorMatch::Negative; anchors.len()];
    let mut anchor_used = vec![false; anchors.len()];
    let mut gt_used = vec![false; gts.len()];
    for (_, j, g) in triples {
        if !anchor_used[j] && !gt_used[g] {
            anchor_used[j] = true;
            gt_used[g] = true;
            out[j] = AnchorMatch::Positive(g);
        }
    }
    for (j, a) in anchors.iter().enumerate() {
        if anchor_used[j] || gts.is_empty() {
            continue;
        }
        let ious: Vec<f64> = gts.iter().map(|b| ref_iou(b, a)).collect();
        let best = ious.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let g = ious.iter().position(|&v| v == best).unwrap();
        if best >= pos {
            out[j] = AnchorMatch::Positive(g);
        } else if ignore.is_some_and(|t| best >= t) {
            out[j] = AnchorMatch::Ignored;
        }
    }
    out
}

/// Reference NMS: repeatedly take the best remaining box and delete everything it suppresses.
pub fn ref_nms(boxes: &[Box4], scores: &[f64], thr: f64, top_k: usize) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..boxes.len()).collect();
    let mut kept = Vec::new();
    while kept.len() < top_k && !remaining.is_empty() {
        let mut best = remaining[0];
        for &i in &remaining {
            if scores[i] > scores[best] || (scores[i] == scores[best] && i < best) {
                best = i;
            }
        }
        kept.push(best);
        remaining.retain(|&i| i != best && ref_iou(&boxes[best], &boxes[i]) <= thr);
    }
    kept
}

/// Reference detect: per-anchor softmax, decode, clip, threshold, per-class NMS.
pub fn ref_detect(
    loc: &[f64],
    cls: &[f64],
    anchors: &[Box4],
    cfg: &DetectConfig,
) -> Vec<(usize, f64, Box4)> {
    let k = cls.len() / anchors.len();
    let (vc, vs) = DEFAULT_VARIANCES;
    let mut out = Vec::new();
    for c in 1..k {
        let mut boxes = Vec::new();
        let mut scores = Vec::new();
        for (j, a) in anchors.iter().enumerate() {
            let row = &cls[j * k..(j + 1) * k];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
            let p = (row[c] - m).exp() / z;
            if p <= cfg.conf_threshold {
                continue;
            }
            let t = &loc[j * 4..j * 4 + 4];
            let ac = center(a);
            let (cx, cy) = (ac[0] + t[0] * vc * ac[2], ac[1] + t[1] * vc * ac[3]);
            let (w, h) = (ac[2] * (t[2] * vs).exp(), ac[3] * (t[3] * vs).exp());
            let b =
                [cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0].map(|v| v.clamp(0.0, 1.0));
            if b[2] <= b[0] || b[3] <= b[1] {
                continue;
            }
            boxes.push(b);
            scores.push(p);
        }
        for i in ref_nms(&boxes, &scores, cfg.nms_threshold, cfg.top_k) {
            out.push((c, scores[i], boxes[i]));
        }
    }
    out
}

/// Reference AP of one class. `counted(g)` selects ground truths that count;
/// the others are ignored. `None` without counted ground truth.
pub fn ref_ap(
    dets: &[DetectionRecord],
    gts: &[GroundTruth],
    class: usize,
    thr: f64,
    protocol: Protocol,
    counted: &dyn Fn(&GroundTruth) -> bool,
) -> Option<f64> {
    let pool: Vec<&GroundTruth> = gts.iter().filter(|g| g.class == class).collect();
    let npos = pool.iter().filter(|g| counted(g)).count();
    if npos == 0 {
        return None;
    }
    let mut ds: Vec<(usize, &DetectionRecord)> = dets
        .iter()
        .filter(|d| d.class == class)
        .enumerate()
        .collect();
    // Stable by score descending, then by input position.
    ds.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then(a.0.cmp(&b.0)));
    let mut matched = vec![false; pool.len()];
    let mut flags = Vec::new();
    for (_, d) in ds {
        let mut pick: Option<usize> = None;
        let mut ignored_hit = false;
        for (i, g) in pool.iter().enumerate() {
            if g.image_id != d.image_id {
                continue;
            }
            let o = ref_iou(&d.bbox, &g.bbox);
            if o < thr {
                continue;
            }
            if !counted(g) {
                ignored_hit = true;
                continue;
            }
            if matched[i] {
                continue;
            }
            if pick.is_none_or(|p| o > ref_iou(&d.bbox, &pool[p].bbox)) {
                pick = Some(i);
            }
        }
        if let Some(i) = pick {
            matched[i] = true;
            flags.push(true);
        } else if !ignored_hit {
            flags.push(false);
        }
    }
    let mut prec = Vec::new();
    let mut rec = Vec::new();
    for i in 0..flags.len() {
        let tp = flags[..=i].iter().filter(|&&f| f).count();
        prec.push(tp as f64 / (i + 1) as f64);
        rec.push(tp as f64 / npos as f64);
    }
    Some(match protocol {
        Protocol::Voc11 => {
            let mut s = 0.0;
            for t in [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0] {
                let mut best = 0.0f64;
                for i in 0..prec.len() {
                    if rec[i] >= t {
                        best = best.max(prec[i]);
                    }
                }
                s += best;
            }
            s / 11.0
        }
        // Each true positive adds 1/npos of recall at the best precision reachable from its rank on.
        Protocol::Allpoint => (0..flags.len())
            .filter(|&i| flags[i])
            .map(|i| prec[i..].iter().cloned().fold(0.0, f64::max) / npos as f64)
            .sum(),
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => close(x, y),
        _ => false,
    }
}

pub fn matching(seed: u64) -> Result<(), String> {
    let mut rng = SeededRng::new(seed);
    let anchors: Vec<Box4> = (0..1 + rng.below(30))
        .map(|_| grid_box(&mut rng, 10))
        .collect();
    let gts: Vec<Box4> = (0..rng.below(6)).map(|_| grid_box(&mut rng, 10)).collect();
    let pos = [0.3, 0.5, 0.7][rng.below(3)];
    let ignore = rng.bernoulli(0.5).then_some(pos * 0.6);
    let set = anchor_set(anchors);
    // Anchors live in center form; their corners are rebuilt from it.
    let corners: Vec<Box4> = set
        .boxes
        .iter()
        .map(|c| {
            [
                c[0] - c[2] / 2.0,
                c[1] - c[3] / 2.0,
                c[0] + c[2] / 2.0,
                c[1] + c[3] / 2.0,
            ]
        })
        .collect();
    let got = match_anchors_with_ignore(&set, &gts, pos, ignore).anchors;
    let want = ref_match(&corners, &gts, pos, ignore);
    (got == want)
        .then_some(())
        .ok_or_else(|| format!("{got:?} != {want:?}"))
}

pub fn nms_instance(seed: u64) -> Result<(), String> {
    let mut rng = SeededRng::new(seed);
    let n = rng.below(25);
    let boxes: Vec<Box4> = (0..n).map(|_| grid_box(&mut rng, 8)).collect();
    let scores: Vec<f64> = (0..n).map(|_| rng.below(6) as f64 / 5.0).collect();
    let thr = [0.3, 0.45, 0.6][rng.below(3)];
    let top_k = 1 + rng.below(10);
    let got = nms(&boxes, &scores, thr, top_k);
    let want = ref_nms(&boxes, &scores, thr, top_k);
    (got == want)
        .then_some(())
        .ok_or_else(|| format!("{got:?} != {want:?}"))
}

pub fn detect_instance(seed: u64) -> Result<(), String> {
    let mut rng = SeededRng::new(seed);
    let a = 1 + rng.below(20);
    let k = 2 + rng.below(3);
    let anchors: Vec<Box4> = (0..a).map(|_| grid_box(&mut rng, 10)).collect();
    let loc: Vec<f64> = (0..a * 4).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
    let cls: Vec<f64> = (0..a * k).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
    let cfg = DetectConfig {
        conf_threshold: [0.01, 0.2, 0.5][rng.below(3)],
        nms_threshold: 0.45,
        top_k: 1 + rng.below(8),
    };
    let got = detect(&loc, &cls, &anchor_set(anchors.clone()), &cfg);
    let want = ref_detect(&loc, &cls, &anchors, &cfg);
    let same = got.len() == want.len()
        && got.iter().zip(&want).all(|(g, w)| {
            g.class == w.0
                && close(g.score, w.1)
                && g.bbox.iter().zip(&w.2).all(|(x, y)| (x - y).abs() < 1e-12)
        });
    same.then_some(())
        .ok_or_else(|| format!("{got:?} != {want:?}"))
}

struct EvalInstance {
    dets: Vec<DetectionRecord>,
    gts: Vec<GroundTruth>,
    num_classes: usize,
    buckets: SizeBuckets,
}

fn eval_instance(seed: u64) -> EvalInstance {
    let mut rng = SeededRng::new(seed);
    let num_classes = 2 + rng.below(3);
    let images = 1 + rng.below(4);
    let buckets = SizeBuckets::default();
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    for im in 0..images {
        let id = format!("im{im}");
        let mut placed = Vec::new();
        for _ in 0..rng.below(5) {
            let b = grid_box(&mut rng, 20);
            let class = 1 + rng.below(num_classes - 1);
            placed.push((class, b));
            gts.push(GroundTruth::new(id.clone(), class, b, &buckets));
        }
        for _ in 0..rng.below(8) {
            // Half of the detections are jittered copies of a ground truth.
            let (class, bbox) = match placed.get(rng.below(placed.len().max(1) * 2)) {
                Some(&(c, b)) => {
                    let j = |rng: &mut SeededRng| rng.below(3) as f64 * 0.05 - 0.05;
                    let mut b2 = [
                        b[0] + j(&mut rng),
                        b[1] + j(&mut rng),
                        b[2] + j(&mut rng),
                        b[3] + j(&mut rng),
                    ];
                    if b2[2] <= b2[0] || b2[3] <= b2[1] {
                        b2 = b;
                    }
                    (
                        if rng.bernoulli(0.8) {
                            c
                        } else {
                            1 + rng.below(num_classes - 1)
                        },
                        b2,
                    )
                }
                None => (1 + rng.below(num_classes - 1), grid_box(&mut rng, 20)),
            };
            dets.push(DetectionRecord {
                image_id: id.clone(),
                class,
                score: rng.below(8) as f64 / 7.0,
                bbox,
            });
        }
    }
    EvalInstance {
        dets,
        gts,
        num_classes,
        buckets,
    }
}

const PROTOCOLS: [Protocol; 2] = [Protocol::Voc11, Protocol::Allpoint];

pub fn ap_instance(seed: u64) -> Result<(), String> {
    let e = eval_instance(seed);
    for protocol in PROTOCOLS {
        for thr in [0.3, 0.5] {
            for c in 1..e.num_classes {
                let got = average_precision(&e.dets, &e.gts, c, thr, protocol);
                let want = ref_ap(&e.dets, &e.gts, c, thr, protocol, &|_| true);
                if !close_opt(got, want) {
                    return Err(format!(
                        "class {c} {protocol:?} thr {thr}: {got:?} != {want:?}"
                    ));
                }
            }
        }
    }
    Ok(())
}

pub fn bucketed_ap_instance(seed: u64) -> Result<(), String> {
    let e = eval_instance(seed);
    for protocol in PROTOCOLS {
        for bucket in [SizeBucket::Small, SizeBucket::Medium, SizeBucket::Large] {
            for c in 1..e.num_classes {
                let got = size_bucketed_ap(&e.dets, &e.gts, c, bucket, 0.5, protocol);
                let area = |g: &GroundTruth| (g.bbox[2] - g.bbox[0]) * (g.bbox[3] - g.bbox[1]);
                let in_bucket = |g: &GroundTruth| {
                    let a = area(g);
                    let b = if a < e.buckets.small_max {
                        SizeBucket::Small
                    } else if a < e.buckets.medium_max {
                        SizeBucket::Medium
                    } else {
                        SizeBucket::Large
                    };
                    b == bucket
                };
                let want = ref_ap(&e.dets, &e.gts, c, 0.5, protocol, &in_bucket);
                if !close_opt(got, want) {
                    return Err(format!(
                        "class {c} {bucket:?} {protocol:?}: {got:?} != {want:?}"
                    ));
                }
            }
        }
    }
    Ok(())
}

/// The full report against per-class references averaged by hand.
pub fn map_instance(seed: u64) -> Result<(), String> {
    let e = eval_instance(seed);
    let cfg = EvalConfig::default();
    let report = evaluate(&e.dets, &e.gts, e.num_classes, &cfg);
    let mut defined = BTreeMap::new();
    for c in 1..e.num_classes {
        let want = ref_ap(&e.dets, &e.gts, c, 0.5, cfg.protocol, &|_| true);
        if !close_opt(report.per_class_ap[&c], want) {
            return Err(format!(
                "class {c}: {:?} != {want:?}",
                report.per_class_ap[&c]
            ));
        }
        if let Some(v) = want {
            defined.insert(c, v);
        }
    }
    let want = (!defined.is_empty()).then(|| defined.values().sum::<f64>() / defined.len() as f64);
    close_opt(report.map, want)
        .then_some(())
        .ok_or_else(|| format!("mAP {:?} != {want:?}", report.map))
}

/// Runs `f` on seeds `0..trials` and reports the first failure.
pub fn sweep(f: fn(u64) -> Result<(), String>, trials: u64) -> Result<(), String> {
    (0..trials).try_for_each(|s| f(s).map_err(|e| format!("seed {s}: {e}")))
}
