//! The training loop and its on-disk artifacts.
//!
//! Every random choice of step `t` comes from `SeededRng::new(seed).split(t)`,
//! and the images of epoch `e` are visited in a permutation drawn from a
//! stream derived from `e`. No generator state carries over between steps, so
//! a run resumed from a checkpoint replays the remaining steps exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::checkpoint::{round_state_to_f32, Checkpoint};
use super::config::RunConfig;
use super::provider::DataProvider;
use crate::data::{augment, samples_to_batch};
use crate::detector::{build_targets, Detector};
use crate::error::{Error, Result};
use crate::landscape::{divergence_check, DivergenceReason, DivergenceStatus, TrainingTrace};
use crate::nn::sgd_step;
use crate::tensor::SeededRng;

pub const TRACE_FILE: &str = "trace.csv";
pub const REPORT_FILE: &str = "report.json";
pub const CONFIG_ECHO_FILE: &str = "config.json";
pub const FINAL_CHECKPOINT: &str = "final.sdck";

/// Losses over the last this many steps are averaged into `final_loss`.
pub const FINAL_LOSS_WINDOW: usize = 50;

const INIT_STREAM: u64 = u64::MAX;
const EPOCH_STREAM_BASE: u64 = 1 << 48;

pub fn checkpoint_name(step: u64) -> String {
    format!("ckpt_{step:06}.sdck")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub status: DivergenceStatus,
    pub reason: DivergenceReason,
    pub first_bad_step: Option<u64>,
    /// Loss of step 1.
    pub initial_loss: Option<f64>,
    /// Mean loss of the last steps, or the last loss when the run diverged.
    pub final_loss: Option<f64>,
    pub steps: u64,
}

pub struct TrainOutcome {
    pub report: TrainReport,
    pub trace: TrainingTrace,
    pub model: Detector,
}

/// Indices of the images in step `step` (1-based).
pub fn batch_indices(seed: u64, train: &[usize], batch_size: usize, step: u64) -> Vec<usize> {
    let n = train.len() as u64;
    let start = (step - 1) * batch_size as u64;
    let mut out = Vec::with_capacity(batch_size);
    let mut cached: Option<(u64, Vec<usize>)> = None;
    for pos in start..start + batch_size as u64 {
        let epoch = pos / n;
        if cached.as_ref().map(|c| c.0) != Some(epoch) {
            let mut perm = train.to_vec();
            SeededRng::new(seed)
                .split(EPOCH_STREAM_BASE + epoch)
                .shuffle(&mut perm);
            cached = Some((epoch, perm));
        }
        out.push(cached.as_ref().unwrap().1[(pos % n) as usize]);
    }
    out
}

/// A freshly initialized model for `cfg`.
pub fn init_model(cfg: &RunConfig) -> Result<Detector> {
    Detector::new(
        &cfg.backbone,
        &cfg.head,
        &mut SeededRng::new(cfg.train.seed).split(INIT_STREAM),
    )
}

fn check_data(cfg: &RunConfig, data: &DataProvider) -> Result<()> {
    if data.image_size() != cfg.backbone.input_size {
        return Err(Error::Config(format!(
            "images are {0}×{0}, backbone expects {1}×{1}",
            data.image_size(),
            cfg.backbone.input_size
        )));
    }
    if data.num_classes() != cfg.head.num_classes {
        return Err(Error::Config(format!(
            "dataset has {} classes with background, head has {}",
            data.num_classes(),
            cfg.head.num_classes
        )));
    }
    Ok(())
}

/// Training hyperparameters, model and head must match for a resume; the data source may move.
fn check_resume(cfg: &RunConfig, ck: &Checkpoint) -> Result<()> {
    let h = &ck.header.config;
    if h.backbone != cfg.backbone
        || h.head != cfg.head
        || h.train != cfg.train
        || h.landscape != cfg.landscape
    {
        return Err(Error::Config(
            "checkpoint was written by a different run configuration".into(),
        ));
    }
    if ck.header.step > cfg.train.max_steps {
        return Err(Error::Config(format!(
            "checkpoint step {} exceeds max_steps {}",
            ck.header.step, cfg.train.max_steps
        )));
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs training into `out_dir`, optionally continuing from `resume`.
///
/// Writes the config echo, `trace.csv`, `report.json`, periodic checkpoints and
/// `final.sdck`. Divergence ends the run early and is reported, not raised.
pub fn train(
    cfg: &RunConfig,
    data: &DataProvider,
    out_dir: &Path,
    resume: Option<&Checkpoint>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_data(cfg, data)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write(
        &out_dir.join(CONFIG_ECHO_FILE),
        &(cfg.to_json_pretty() + "\n"),
    )?;

    let t = &cfg.train;
    let (mut model, mut trace, start) = match resume {
        Some(ck) => {
            check_resume(cfg, ck)?;
            let mut model = init_model(cfg)?;
            ck.restore(&mut model)?;
            let trace = TrainingTrace::from_csv(&ck.header.trace_csv, cfg.landscape.window)?;
            if trace.records().last().map_or(0, |r| r.step) != ck.header.step {
                return Err(Error::Integrity(
                    "checkpoint trace does not end at its step".into(),
                ));
            }
            (model, trace, ck.header.step + 1)
        }
        None => (
            init_model(cfg)?,
            TrainingTrace::new(cfg.landscape.window)?,
            1,
        ),
    };
    let base = SeededRng::new(t.seed);
    let blowup = cfg.landscape.blowup();
    let mut verdict = divergence_check(&trace, &blowup);

    let mut step = start;
    while step <= t.max_steps && !verdict.diverged() {
        let lr = t.lr_at(step);
        let mut rng = base.split(step);
        let samples: Vec<_> = batch_indices(t.seed, data.train_indices(), t.batch_size, step)
            .into_iter()
            .map(|i| augment(data.sample(i), &mut rng, &t.augment))
            .collect();
        let (batch, gts) = samples_to_batch(&samples)?;
        let targets = gts
            .iter()
            .map(|g| build_targets(model.anchors(), g, t.pos_threshold))
            .collect::<Result<Vec<_>>>()?;
        let loss = model.loss_and_backward(&batch, &targets, t.neg_pos_ratio)?;
        trace.record_step(
            step,
            loss.total,
            model.params().into_iter().map(|p| &p.grad),
            lr,
        )?;
        verdict = divergence_check(&trace, &blowup);
        if verdict.diverged() {
            log::info!("step {step}: diverged ({:?})", verdict.reason);
            model.zero_grad();
            break;
        }
        sgd_step(model.params_mut(), lr, t.momentum, t.weight_decay)?;
        if step % 100 == 0 {
            log::info!(
                "step {step}/{}: loss {:.4} lr {lr}",
                t.max_steps,
                loss.total
            );
        }
        if t.checkpoint_every > 0 && step % t.checkpoint_every == 0 {
            round_state_to_f32(&mut model);
            Checkpoint::capture(
                &model,
                cfg,
                step,
                base.split(step + 1).state(),
                trace.to_csv(),
            )
            .save(&out_dir.join(checkpoint_name(step)))?;
        }
        step += 1;
    }

    let last = trace.records().last().map_or(0, |r| r.step);
    round_state_to_f32(&mut model);
    Checkpoint::capture(
        &model,
        cfg,
        last,
        base.split(last + 1).state(),
        trace.to_csv(),
    )
    .save(&out_dir.join(FINAL_CHECKPOINT))?;
    trace.export(&out_dir.join(TRACE_FILE))?;

    let losses: Vec<f64> = trace.records().iter().map(|r| r.loss).collect();
    let final_loss = if verdict.diverged() {
        losses.last().copied()
    } else {
        let tail = &losses[losses.len().saturating_sub(FINAL_LOSS_WINDOW)..];
        (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
    };
    let finite = |v: Option<f64>| v.filter(|x| x.is_finite());
    let report = TrainReport {
        status: verdict.status,
        reason: verdict.reason,
        first_bad_step: verdict.first_bad_step,
        initial_loss: finite(losses.first().copied()),
        final_loss: finite(final_loss),
        steps: last,
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    write(&out_dir.join(REPORT_FILE), &(text + "\n"))?;
    Ok(TrainOutcome {
        report,
        trace,
        model,
    })
}
