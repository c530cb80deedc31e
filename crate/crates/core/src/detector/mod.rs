//! Single-shot detection: anchors, matching, the prediction head, multibox
//! loss with hard negative mining, and decode + NMS inference.
//!
//! Flattened anchor order everywhere is level → row → column → anchor-in-cell.

mod anchors;
mod boxes;
mod detect;
mod head;
mod matching;
mod model;
mod multibox;
mod nms;

pub use anchors::{generate_anchors, linear_scales, AnchorLevel, AnchorSet};
pub use boxes::{
    area, clip_unit, decode_box, encode_box, iou, to_center, to_corners, CenterBox, Corners,
    DEFAULT_VARIANCES,
};
pub use detect::{
    detect, read_detections_jsonl, write_detections_jsonl, DetectConfig, Detection, DetectionRecord,
};
pub use head::{Head, HeadCache, HeadConfig, HeadOutput};
pub use matching::{
    build_targets, match_anchors, match_anchors_with_ignore, AnchorMatch, AnchorTarget, GtBox,
    MatchResult,
};
pub use model::{Detector, DetectorCache};
pub use multibox::{multibox_loss, DEFAULT_NEG_POS_RATIO};
pub use nms::nms;
