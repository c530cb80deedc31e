//! Deterministic synthetic detection scenes (disks, squares and triangles
//! over textured noise), their on-disk layout, and SSD-style augmentation.
//!
//! Layout of a generated dataset directory:
//!
//! ```text
//! manifest.json        config, image list, train/eval split, SHA-256 digest
//! annotations.jsonl    {"id": ..., "boxes": [{"class", "x1", "y1", "x2", "y2"}]} per image
//! images/img_NNNNN.ppm binary P6 rasters
//! ```

mod augment;
mod dataset;
mod ppm;
mod scene;

pub use augment::{
    augment, hflip, photometric, ssd_crop, AugmentPolicy, CROP_ATTEMPTS, CROP_MIN_IOUS,
    PHOTOMETRIC_RANGE,
};
pub use dataset::{
    denormalize_pixel, generate_dataset, normalize_pixel, normalized_boxes, samples_to_batch,
    AnnotationLine, Dataset, ImageEntry, Manifest, ANNOTATIONS_FILE, MANIFEST_FILE,
    MANIFEST_VERSION,
};
pub use ppm::{decode_ppm, encode_ppm};
pub use scene::{
    generate_sample, image_id, render_shape, shape_contains, BackgroundConfig, PixelBox, Sample,
    SceneConfig, ShapeKind, MAX_PAIR_IOU,
};
