use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backbone::BackboneConfig;
use crate::data::{AugmentPolicy, SceneConfig};
use crate::detector::{DetectConfig, HeadConfig};
use crate::error::{Error, Result};
use crate::evalkit::{EvalConfig, Protocol, SizeBuckets};
use crate::landscape::{BlowupConfig, DEFAULT_WINDOW};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub base_lr: f64,
    /// Fractions of `max_steps` after which the rate is multiplied by `lr_decay`.
    #[serde(default = "default_milestones")]
    pub milestones: Vec<f64>,
    #[serde(default = "default_decay")]
    pub lr_decay: f64,
    /// The reference setting is 128; 16 keeps desk runs fast.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub max_steps: u64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_wd")]
    pub weight_decay: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_neg_pos")]
    pub neg_pos_ratio: usize,
    #[serde(default = "default_pos_threshold")]
    pub pos_threshold: f64,
    #[serde(default)]
    pub augment: AugmentPolicy,
    /// Save a checkpoint every this many steps (0 disables periodic checkpoints).
    #[serde(default)]
    pub checkpoint_every: u64,
}

fn default_milestones() -> Vec<f64> {
    vec![0.6, 0.8, 0.95]
}
fn default_decay() -> f64 {
    0.1
}
fn default_batch() -> usize {
    16
}
fn default_momentum() -> f64 {
    0.9
}
fn default_wd() -> f64 {
    0.0005
}
fn default_neg_pos() -> usize {
    3
}
fn default_pos_threshold() -> f64 {
    0.5
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 0.01,
            milestones: default_milestones(),
            lr_decay: 0.1,
            batch_size: 16,
            max_steps: 3000,
            momentum: 0.9,
            weight_decay: 0.0005,
            seed: 0,
            neg_pos_ratio: 3,
            pos_threshold: 0.5,
            augment: AugmentPolicy::default(),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// Learning rate of 1-based `step`: decayed once per milestone `m` with `step > ⌊m · max_steps⌋`.
    pub fn lr_at(&self, step: u64) -> f64 {
        let passed = self
            .milestones
            .iter()
            .filter(|&&m| step > (m * self.max_steps as f64).floor() as u64)
            .count();
        self.base_lr * self.lr_decay.powi(passed as i32)
    }
}

/// Where training images come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    /// A dataset directory (or its manifest.json) produced by `gen-data`.
    Manifest { manifest: PathBuf },
    /// Scenes generated in memory at start-up.
    Scene { scene: SceneConfig },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default = "default_iou")]
    pub iou_threshold: f64,
    #[serde(default)]
    pub buckets: SizeBuckets,
    #[serde(default)]
    pub detect: DetectConfig,
    /// Evaluate on at most this many eval-split images (all when absent).
    #[serde(default)]
    pub max_images: Option<usize>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            protocol: Protocol::Voc11,
            iou_threshold: 0.5,
            buckets: SizeBuckets::default(),
            detect: DetectConfig::default(),
            max_images: None,
        }
    }
}

impl EvalSettings {
    pub fn metrics(&self) -> EvalConfig {
        EvalConfig {
            protocol: self.protocol,
            iou_threshold: self.iou_threshold,
            buckets: self.buckets,
        }
    }
}

fn default_iou() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeConfig {
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_blowup")]
    pub blowup_factor: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
}

impl LandscapeConfig {
    pub fn blowup(&self) -> BlowupConfig {
        BlowupConfig {
            blowup_factor: self.blowup_factor,
            patience: self.patience,
        }
    }
}

fn default_blowup() -> f64 {
    10.0
}
fn default_patience() -> usize {
    100
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        LandscapeConfig {
            window: DEFAULT_WINDOW,
            blowup_factor: 10.0,
            patience: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub backbone: BackboneConfig,
    pub head: HeadConfig,
    pub train: TrainConfig,
    pub data: DataSource,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub landscape: LandscapeConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.head.validate()?;
        let t = &self.train;
        let fail = |m: String| Err(Error::Config(m));
        if !(t.base_lr > 0.0 && t.base_lr.is_finite()) {
            return fail(format!("base_lr must be positive, got {}", t.base_lr));
        }
        if t.batch_size == 0 || t.max_steps == 0 {
            return fail("batch_size and max_steps must be positive".into());
        }
        if (self.head.bn_in_head || self.backbone.bn_in_backbone) && t.batch_size < 2 {
            return fail("BatchNorm needs batch_size ≥ 2".into());
        }
        if t.milestones.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return fail(format!(
                "milestones {:?} must be fractions in [0, 1]",
                t.milestones
            ));
        }
        if !(0.0..1.0).contains(&t.momentum)
            || t.weight_decay < 0.0
            || !(0.0..=1.0).contains(&t.lr_decay)
        {
            return fail("need 0 ≤ momentum < 1, weight_decay ≥ 0 and 0 ≤ lr_decay ≤ 1".into());
        }
        if !(0.0 < t.pos_threshold && t.pos_threshold <= 1.0) {
            return fail("pos_threshold must lie in (0, 1]".into());
        }
        if self.landscape.window == 0 || self.landscape.patience == 0 {
            return fail("landscape window and patience must be positive".into());
        }
        if let DataSource::Scene { scene } = &self.data {
            scene.validate()?;
            if scene.image_size != self.backbone.input_size {
                return fail(format!(
                    "scene image_size {} differs from backbone input_size {}",
                    scene.image_size, self.backbone.input_size
                ));
            }
            if scene.num_classes() != self.head.num_classes {
                return fail(format!(
                    "scene has {} classes with background, head has {}",
                    scene.num_classes(),
                    self.head.num_classes
                ));
            }
        }
        Ok(())
    }

    /// Reads and validates a JSON config; relative manifest paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.resolve_paths(path);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Makes a relative manifest path relative to the directory of `config_path`.
    pub fn resolve_paths(&mut self, config_path: &Path) {
        if let DataSource::Manifest { manifest } = &mut self.data {
            if manifest.is_relative() {
                if let Some(dir) = config_path.parent() {
                    *manifest = dir.join(&*manifest);
                }
            }
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
