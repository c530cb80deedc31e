use super::config::DataSource;
use crate::data::{generate_sample, Dataset, Sample, SceneConfig};
use crate::error::{Error, Result};
use crate::tensor::map_indexed;

/// Decoded images held in memory with their train/eval split.
#[derive(Clone, Debug)]
pub struct DataProvider {
    samples: Vec<Sample>,
    train: Vec<usize>,
    eval: Vec<usize>,
    image_size: usize,
    num_classes: usize,
}

impl DataProvider {
    pub fn from_source(source: &DataSource) -> Result<Self> {
        match source {
            DataSource::Manifest { manifest } => Self::from_dataset(&Dataset::open(manifest)?),
            DataSource::Scene { scene } => Self::from_scene(scene),
        }
    }

    /// Verifies the dataset digest, then decodes every image.
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        ds.verify()?;
        let samples = (0..ds.len())
            .map(|i| ds.sample(i))
            .collect::<Result<Vec<_>>>()?;
        let m = ds.manifest();
        Self::from_samples(samples, m.train.clone(), m.eval.clone(), ds.num_classes())
    }

    pub fn from_scene(cfg: &SceneConfig) -> Result<Self> {
        cfg.validate()?;
        let samples = map_indexed(cfg.num_images, |i| generate_sample(cfg, i));
        let n_eval = cfg.eval_count();
        let n_train = cfg.num_images - n_eval;
        Self::from_samples(
            samples,
            (0..n_train).collect(),
            (n_train..cfg.num_images).collect(),
            cfg.num_classes(),
        )
    }

    /// `num_classes` counts the background class.
    pub fn from_samples(
        samples: Vec<Sample>,
        train: Vec<usize>,
        eval: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::Config("dataset has no images".into()));
        };
        let image_size = first.width;
        if samples
            .iter()
            .any(|s| s.width != image_size || s.height != image_size)
        {
            return Err(Error::Config(
                "all images must be square and equally sized".into(),
            ));
        }
        if train.is_empty() {
            return Err(Error::Config("training split is empty".into()));
        }
        if train.iter().chain(&eval).any(|&i| i >= samples.len()) {
            return Err(Error::Config("split index out of range".into()));
        }
        if samples
            .iter()
            .flat_map(|s| &s.boxes)
            .any(|b| b.class == 0 || b.class >= num_classes)
        {
            return Err(Error::Config(format!(
                "object class outside 1..{num_classes}"
            )));
        }
        Ok(DataProvider {
            samples,
            train,
            eval,
            image_size,
            num_classes,
        })
    }

    pub fn sample(&self, index: usize) -> &Sample {
        &self.samples[index]
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train
    }

    pub fn eval_indices(&self) -> &[usize] {
        &self.eval
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}
