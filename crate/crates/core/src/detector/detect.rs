use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::anchors::AnchorSet;
use super::boxes::{clip_unit, decode_box, Corners};
use super::nms::nms;
use crate::error::{Error, Result};
use crate::nn::softmax_row;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub conf_threshold: f64,
    pub nms_threshold: f64,
    pub top_k: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            conf_threshold: 0.01,
            nms_threshold: 0.45,
            top_k: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: usize,
    pub score: f64,
    pub bbox: Corners,
}

/// Detections of one image from its raw head rows `loc (A·4)` and `cls (A·K)`.
///
/// Output is grouped by class (ascending), each group in NMS keep order.
/// Boxes that collapse to zero width or height after clipping are dropped.
#[allow(clippy::needless_range_loop)]
pub fn detect(loc: &[f64], cls: &[f64], anchors: &AnchorSet, cfg: &DetectConfig) -> Vec<Detection> {
    let a = anchors.len();
    let k = cls.len() / a.max(1);
    let probs: Vec<Vec<f64>> = (0..a)
        .map(|j| softmax_row(&cls[j * k..(j + 1) * k]))
        .collect();
    let mut decoded: Vec<Option<Corners>> = vec![None; a];
    let mut out = Vec::new();
    for c in 1..k {
        let mut boxes = Vec::new();
        let mut scores = Vec::new();
        for j in 0..a {
            let p = probs[j][c];
            if p <= cfg.conf_threshold {
                continue;
            }
            let b = *decoded[j].get_or_insert_with(|| {
                clip_unit(&decode_box(
                    &loc[j * 4..j * 4 + 4],
                    &anchors.boxes[j],
                    anchors.variances,
                ))
            });
            if !(b[2] > b[0] && b[3] > b[1]) {
                continue;
            }
            boxes.push(b);
            scores.push(p);
        }
        for i in nms(&boxes, &scores, cfg.nms_threshold, cfg.top_k) {
            out.push(Detection {
                class: c,
                score: scores[i],
                bbox: boxes[i],
            });
        }
    }
    out
}

/// One exported detection line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub class: usize,
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: Corners,
}

pub fn write_detections_jsonl(path: &Path, records: &[DetectionRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::json(path, e))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_detections_jsonl(path: &Path) -> Result<Vec<DetectionRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
    }
    Ok(out)
}
