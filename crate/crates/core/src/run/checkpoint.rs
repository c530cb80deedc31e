//! Checkpoint file layout (all integers little-endian):
//!
//! ```text
//! "SDCK" | version u32 | header length u64 | header JSON | f32 blobs | SHA-256 of everything before
//! ```
//!
//! Blobs follow the header's `blobs` list: every parameter value, then every
//! momentum buffer in the same order, then each BatchNorm's running mean and
//! running variance.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::backbone::NetworkSpec;
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::tensor::RngState;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SDCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlobKind {
    Value,
    Momentum,
    RunningMean,
    RunningVar,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub name: String,
    pub kind: BlobKind,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: RunConfig,
    pub spec: NetworkSpec,
    /// Last completed step.
    pub step: u64,
    pub rng: RngState,
    pub blobs: Vec<BlobEntry>,
    /// Trace rows up to `step`, in trace CSV format.
    pub trace_csv: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub data: Vec<Vec<f32>>,
}

/// Rounds every persisted quantity of the model to `f32` precision in place.
pub fn round_state_to_f32(model: &mut Detector) {
    let round = |v: &mut f64| *v = *v as f32 as f64;
    for p in model.params_mut() {
        p.value.data_mut().iter_mut().for_each(round);
        p.momentum_buf.data_mut().iter_mut().for_each(round);
    }
    for bn in model.batchnorms_mut() {
        bn.running_mean.iter_mut().for_each(round);
        bn.running_var.iter_mut().for_each(round);
    }
}

impl Checkpoint {
    pub fn capture(
        model: &Detector,
        config: &RunConfig,
        step: u64,
        rng: RngState,
        trace_csv: String,
    ) -> Self {
        let mut blobs = Vec::new();
        let mut data = Vec::new();
        let to32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
        let params = model.params();
        for p in &params {
            blobs.push(BlobEntry {
                name: p.name.clone(),
                kind: BlobKind::Value,
                shape: p.value.shape().to_vec(),
            });
            data.push(to32(p.value.data()));
        }
        for p in &params {
            blobs.push(BlobEntry {
                name: p.name.clone(),
                kind: BlobKind::Momentum,
                shape: p.value.shape().to_vec(),
            });
            data.push(to32(p.momentum_buf.data()));
        }
        for bn in model.batchnorms() {
            let name = bn.gamma.name.trim_end_matches(".gamma").to_string();
            for (kind, v) in [
                (BlobKind::RunningMean, &bn.running_mean),
                (BlobKind::RunningVar, &bn.running_var),
            ] {
                blobs.push(BlobEntry {
                    name: name.clone(),
                    kind,
                    shape: vec![v.len()],
                });
                data.push(to32(v));
            }
        }
        Checkpoint {
            header: CheckpointHeader {
                config: config.clone(),
                spec: model.spec().clone(),
                step,
                rng,
                blobs,
                trace_csv,
            },
            data,
        }
    }

    /// Copies the stored state into a model built from the same spec and head config.
    pub fn restore(&self, model: &mut Detector) -> Result<()> {
        let mismatch =
            |m: String| Error::Integrity(format!("checkpoint does not fit the model: {m}"));
        let mut blobs = self.header.blobs.iter().zip(&self.data);
        let mut next = |kind: BlobKind, name: &str, len: usize| {
            let (entry, data) = blobs
                .next()
                .ok_or_else(|| mismatch("too few blobs".into()))?;
            if entry.kind != kind || entry.name != name || data.len() != len {
                return Err(mismatch(format!(
                    "expected {kind:?} `{name}` of {len}, found {:?} `{}`",
                    entry.kind, entry.name
                )));
            }
            Ok(data)
        };
        let mut params = model.params_mut();
        for p in params.iter_mut() {
            let d = next(BlobKind::Value, &p.name.clone(), p.value.len())?;
            p.value
                .data_mut()
                .iter_mut()
                .zip(d)
                .for_each(|(v, &x)| *v = x as f64);
        }
        for p in params.iter_mut() {
            let d = next(BlobKind::Momentum, &p.name.clone(), p.value.len())?;
            p.momentum_buf
                .data_mut()
                .iter_mut()
                .zip(d)
                .for_each(|(v, &x)| *v = x as f64);
            p.zero_grad();
        }
        drop(params);
        for bn in model.batchnorms_mut() {
            let name = bn.gamma.name.trim_end_matches(".gamma").to_string();
            let d = next(BlobKind::RunningMean, &name, bn.running_mean.len())?;
            bn.running_mean
                .iter_mut()
                .zip(d)
                .for_each(|(v, &x)| *v = x as f64);
            let d = next(BlobKind::RunningVar, &name, bn.running_var.len())?;
            bn.running_var
                .iter_mut()
                .zip(d)
                .for_each(|(v, &x)| *v = x as f64);
        }
        if blobs.next().is_some() {
            return Err(mismatch("extra blobs".into()));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(
            16 + header.len() + 4 * self.data.iter().map(Vec::len).sum::<usize>() + DIGEST_LEN,
        );
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for blob in &self.data {
            for v in blob {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Integrity(format!("checkpoint: {m}"));
        if bytes.len() < 16 + DIGEST_LEN {
            return Err(bad("file too short"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("SHA-256 digest mismatch"));
        }
        if &body[..4] != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(body[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(body[8..16].try_into().unwrap()) as usize;
        let hend = 16usize
            .checked_add(hlen)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| bad("header overruns file"))?;
        let header: CheckpointHeader = serde_json::from_slice(&body[16..hend])
            .map_err(|e| bad(&format!("header JSON: {e}")))?;
        let mut rest = &body[hend..];
        let mut data = Vec::with_capacity(header.blobs.len());
        for b in &header.blobs {
            let n: usize = b.shape.iter().product();
            if rest.len() < 4 * n {
                return Err(bad("blob data truncated"));
            }
            let (chunk, tail) = rest.split_at(4 * n);
            data.push(
                chunk
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
            rest = tail;
        }
        if !rest.is_empty() {
            return Err(bad("trailing bytes after the blobs"));
        }
        Ok(Checkpoint { header, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Rebuilds the model stored in this checkpoint.
    pub fn model(&self) -> Result<Detector> {
        let mut rng = crate::tensor::SeededRng::new(0);
        let mut model =
            Detector::from_spec(self.header.spec.clone(), &self.header.config.head, &mut rng)?;
        self.restore(&mut model)?;
        Ok(model)
    }
}
