use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ppm::{decode_ppm, encode_ppm};
use super::scene::{generate_sample, PixelBox, Sample, SceneConfig};
use crate::detector::GtBox;
use crate::error::{Error, Result};
use crate::tensor::{map_indexed, Tensor};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: String,
    pub file: String,
}

/// Dataset index. `digest` is the SHA-256 over every image file (in manifest
/// order) followed by the annotations file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub config: SceneConfig,
    pub images: Vec<ImageEntry>,
    pub annotations: String,
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
    pub digest: String,
}

/// One line of the annotations file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationLine {
    pub id: String,
    pub boxes: Vec<PixelBox>,
}

/// Writes images, annotations and the manifest into `out_dir`.
pub fn generate_dataset(cfg: &SceneConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let img_dir = out_dir.join("images");
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let mut hasher = Sha256::new();
    let mut images = Vec::with_capacity(cfg.num_images);
    let mut ann = Vec::new();
    let chunk = 64;
    for start in (0..cfg.num_images).step_by(chunk) {
        let end = (start + chunk).min(cfg.num_images);
        let samples = map_indexed(end - start, |i| generate_sample(cfg, start + i));
        for s in samples {
            let file = format!("images/{}.ppm", s.id);
            let bytes = encode_ppm(s.width, s.height, &s.pixels);
            let path = out_dir.join(&file);
            std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            hasher.update(&bytes);
            let line = serde_json::to_string(&AnnotationLine {
                id: s.id.clone(),
                boxes: s.boxes,
            })
            .map_err(|e| Error::json(out_dir, e))?;
            writeln!(ann, "{line}").expect("write to Vec");
            images.push(ImageEntry { id: s.id, file });
        }
    }
    let ann_path = out_dir.join(ANNOTATIONS_FILE);
    std::fs::write(&ann_path, &ann).map_err(|e| Error::io(&ann_path, e))?;
    hasher.update(&ann);
    let n_eval = cfg.eval_count();
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        config: cfg.clone(),
        images,
        annotations: ANNOTATIONS_FILE.into(),
        train: (0..cfg.num_images - n_eval).collect(),
        eval: (cfg.num_images - n_eval..cfg.num_images).collect(),
        digest: hex::encode(hasher.finalize()),
    };
    let mpath = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&mpath, e))?;
    std::fs::write(&mpath, text + "\n").map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}

/// A generated dataset opened from disk.
#[derive(Clone, Debug)]
pub struct Dataset {
    root: PathBuf,
    manifest: Manifest,
    annotations: Vec<Vec<PixelBox>>,
}

impl Dataset {
    /// Opens `dir` (or the directory of a manifest path).
    pub fn open(path: &Path) -> Result<Self> {
        let (root, mpath) = if path.is_dir() {
            (path.to_path_buf(), path.join(MANIFEST_FILE))
        } else {
            (
                path.parent().unwrap_or(Path::new(".")).to_path_buf(),
                path.to_path_buf(),
            )
        };
        let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(&mpath, e))?;
        let apath = root.join(&manifest.annotations);
        let atext = std::fs::read_to_string(&apath).map_err(|e| Error::io(&apath, e))?;
        let mut annotations = Vec::with_capacity(manifest.images.len());
        for (i, line) in atext.lines().enumerate() {
            let a: AnnotationLine =
                serde_json::from_str(line).map_err(|e| Error::json(&apath, e))?;
            if manifest.images.get(i).map(|e| &e.id) != Some(&a.id) {
                return Err(Error::Corrupt {
                    path: apath,
                    reason: format!(
                        "line {} is for image `{}`, out of manifest order",
                        i + 1,
                        a.id
                    ),
                });
            }
            annotations.push(a.boxes);
        }
        if annotations.len() != manifest.images.len() {
            return Err(Error::Corrupt {
                path: apath,
                reason: format!(
                    "{} annotation lines for {} images",
                    annotations.len(),
                    manifest.images.len()
                ),
            });
        }
        Ok(Dataset {
            root,
            manifest,
            annotations,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.manifest.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.images.is_empty()
    }

    pub fn image_size(&self) -> usize {
        self.manifest.config.image_size
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.config.num_classes()
    }

    pub fn boxes(&self, index: usize) -> &[PixelBox] {
        &self.annotations[index]
    }

    /// Recomputes the content digest and compares it with the manifest.
    pub fn verify(&self) -> Result<()> {
        let mut hasher = Sha256::new();
        for e in &self.manifest.images {
            let p = self.root.join(&e.file);
            hasher.update(std::fs::read(&p).map_err(|err| Error::io(&p, err))?);
        }
        let apath = self.root.join(&self.manifest.annotations);
        hasher.update(std::fs::read(&apath).map_err(|e| Error::io(&apath, e))?);
        let got = hex::encode(hasher.finalize());
        if got != self.manifest.digest {
            return Err(Error::Integrity(format!(
                "dataset digest {got} does not match manifest {}",
                self.manifest.digest
            )));
        }
        Ok(())
    }

    pub fn sample(&self, index: usize) -> Result<Sample> {
        let entry = self
            .manifest
            .images
            .get(index)
            .ok_or_else(|| Error::Contract(format!("image index {index} out of range")))?;
        let path = self.root.join(&entry.file);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let (width, height, pixels) = decode_ppm(&bytes, &path)?;
        if width != self.image_size() || height != self.image_size() {
            return Err(Error::Corrupt {
                path,
                reason: format!(
                    "image is {width}×{height}, manifest says {}",
                    self.image_size()
                ),
            });
        }
        Ok(Sample {
            id: entry.id.clone(),
            width,
            height,
            pixels,
            boxes: self.annotations[index].clone(),
        })
    }

    /// Unaugmented batch of the given images.
    pub fn load_batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<Vec<GtBox>>)> {
        let samples = indices
            .iter()
            .map(|&i| self.sample(i))
            .collect::<Result<Vec<_>>>()?;
        samples_to_batch(&samples)
    }
}

/// Maps a byte to `[−1, 1]`.
pub fn normalize_pixel(v: u8) -> f64 {
    v as f64 / 127.5 - 1.0
}

pub fn denormalize_pixel(v: f64) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Normalized boxes of a sample, dropping degenerate ones.
pub fn normalized_boxes(s: &Sample) -> Vec<GtBox> {
    let (w, h) = (s.width as f64, s.height as f64);
    s.boxes
        .iter()
        .filter(|b| b.x2 > b.x1 && b.y2 > b.y1)
        .map(|b| GtBox {
            class: b.class,
            bbox: [b.x1 / w, b.y1 / h, b.x2 / w, b.y2 / h].map(|v| v.clamp(0.0, 1.0)),
        })
        .collect()
}

/// Stacks equally sized samples into an NCHW tensor in `[−1, 1]` plus normalized targets.
pub fn samples_to_batch(samples: &[Sample]) -> Result<(Tensor, Vec<Vec<GtBox>>)> {
    let Some(first) = samples.first() else {
        return Err(Error::Contract("empty batch".into()));
    };
    let (w, h) = (first.width, first.height);
    let mut data = Vec::with_capacity(samples.len() * 3 * w * h);
    for s in samples {
        if (s.width, s.height) != (w, h) {
            return Err(Error::dim(
                "load_batch",
                format!(
                    "image {} is {}×{}, batch is {w}×{h}",
                    s.id, s.width, s.height
                ),
            ));
        }
        for c in 0..3 {
            data.extend((0..w * h).map(|p| normalize_pixel(s.pixels[p * 3 + c])));
        }
    }
    let t = Tensor::from_vec(&[samples.len(), 3, h, w], data)?;
    Ok((t, samples.iter().map(normalized_boxes).collect()))
}
