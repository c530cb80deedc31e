use std::path::Path;

use super::config::EvalSettings;
use super::provider::DataProvider;
use crate::data::{normalized_boxes, samples_to_batch};
use crate::detector::{write_detections_jsonl, DetectionRecord, Detector};
use crate::error::{Error, Result};
use crate::evalkit::{evaluate, EvalReport, GroundTruth};

pub const EVAL_FILE: &str = "eval.json";
pub const DETECTIONS_FILE: &str = "detections.jsonl";

const EVAL_BATCH: usize = 16;

/// Inference over the eval split (capped at `max_images`) and the resulting report.
pub fn evaluate_model(
    model: &mut Detector,
    data: &DataProvider,
    settings: &EvalSettings,
) -> Result<(Vec<DetectionRecord>, EvalReport)> {
    let metrics = settings.metrics();
    let mut indices = data.eval_indices();
    if let Some(m) = settings.max_images {
        indices = &indices[..m.min(indices.len())];
    }
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for chunk in indices.chunks(EVAL_BATCH) {
        let samples: Vec<_> = chunk.iter().map(|&i| data.sample(i).clone()).collect();
        let (batch, _) = samples_to_batch(&samples)?;
        let preds = model.predict(&batch, &settings.detect)?;
        for (s, p) in samples.iter().zip(preds) {
            dets.extend(p.into_iter().map(|d| DetectionRecord {
                image_id: s.id.clone(),
                class: d.class,
                score: d.score,
                bbox: d.bbox,
            }));
            gts.extend(
                normalized_boxes(s)
                    .into_iter()
                    .map(|g| GroundTruth::new(s.id.clone(), g.class, g.bbox, &metrics.buckets)),
            );
        }
    }
    let report = evaluate(&dets, &gts, data.num_classes(), &metrics);
    Ok((dets, report))
}

/// Writes `eval.json` and `detections.jsonl` into `out_dir`.
pub fn write_eval(out_dir: &Path, dets: &[DetectionRecord], report: &EvalReport) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_detections_jsonl(&out_dir.join(DETECTIONS_FILE), dets)?;
    let path = out_dir.join(EVAL_FILE);
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}
