//! Per-step optimization traces: loss, global gradient norm, smoothed
//! gradient-norm fluctuation and learning rate, with divergence detection.

mod merge;

pub use merge::{merge_traces, MERGED_HEADER};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{global_grad_l2_norm, Tensor};

pub const TRACE_HEADER: &str = "step,loss,grad_norm,grad_fluct,lr";
pub const DEFAULT_WINDOW: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub step: u64,
    pub loss: f64,
    pub grad_norm: f64,
    /// Absent on the first record.
    pub grad_fluct: Option<f64>,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingTrace {
    window: usize,
    records: Vec<TraceRecord>,
}

impl TrainingTrace {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("fluctuation window must be ≥ 1".into()));
        }
        Ok(TrainingTrace {
            window,
            records: Vec::new(),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.grad_norm).collect()
    }

    /// Appends a step whose raw loss gradients are `grads` (weight decay excluded).
    pub fn record_step<'a, I>(
        &mut self,
        step: u64,
        loss: f64,
        grads: I,
        lr: f64,
    ) -> Result<&TraceRecord>
    where
        I: IntoIterator<Item = &'a Tensor>,
    {
        self.record(step, loss, global_grad_l2_norm(grads), lr)
    }

    /// Appends a step with an already computed gradient norm.
    pub fn record(
        &mut self,
        step: u64,
        loss: f64,
        grad_norm: f64,
        lr: f64,
    ) -> Result<&TraceRecord> {
        if let Some(last) = self.records.last() {
            if step <= last.step {
                return Err(Error::Contract(format!(
                    "trace step {step} after step {}",
                    last.step
                )));
            }
        }
        let grad_fluct = self.records.last().map(|_| {
            let mut norms: Vec<f64> = self
                .records
                .iter()
                .rev()
                .take(self.window)
                .map(|r| r.grad_norm)
                .collect();
            norms.reverse();
            norms.push(grad_norm);
            trailing_mean_abs_diff(&norms)
        });
        self.records.push(TraceRecord {
            step,
            loss,
            grad_norm,
            grad_fluct,
            lr,
        });
        Ok(self.records.last().unwrap())
    }

    /// Mean smoothed fluctuation over records with `lo ≤ step ≤ hi`.
    pub fn mean_fluctuation(&self, lo: u64, hi: u64) -> Option<f64> {
        let v: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.step >= lo && r.step <= hi)
            .filter_map(|r| r.grad_fluct)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.records.len() + 1));
        s.push_str(TRACE_HEADER);
        s.push('\n');
        for r in &self.records {
            let fluct = r.grad_fluct.map(fmt_f64).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step,
                fmt_f64(r.loss),
                fmt_f64(r.grad_norm),
                fluct,
                fmt_f64(r.lr)
            ));
        }
        s
    }

    /// Parses CSV produced by [`TrainingTrace::to_csv`]; fluctuation values are taken as written.
    pub fn from_csv(text: &str, window: usize) -> Result<Self> {
        let mut trace = TrainingTrace::new(window)?;
        let mut lines = text.lines();
        if lines.next() != Some(TRACE_HEADER) {
            return Err(Error::Config(format!(
                "trace header must be `{TRACE_HEADER}`"
            )));
        }
        for (i, line) in lines.enumerate() {
            let bad = |what: &str| Error::Config(format!("trace line {}: {what}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad("expected 5 fields"));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| bad(&format!("bad number `{s}`")))
            };
            let record = TraceRecord {
                step: f[0].parse().map_err(|_| bad("bad step"))?,
                loss: num(f[1])?,
                grad_norm: num(f[2])?,
                grad_fluct: if f[3].is_empty() {
                    None
                } else {
                    Some(num(f[3])?)
                },
                lr: num(f[4])?,
            };
            if trace.records.last().is_some_and(|l| l.step >= record.step) {
                return Err(bad("steps must increase"));
            }
            trace.records.push(record);
        }
        Ok(trace)
    }

    pub fn export(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, window: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, window)
    }

    /// Keeps records with `step ≤ last_step`.
    pub fn truncate_to(&mut self, last_step: u64) {
        self.records.retain(|r| r.step <= last_step);
    }
}

/// 17 significant digits; round-trips every finite `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn trailing_mean_abs_diff(norms: &[f64]) -> f64 {
    let diffs: Vec<f64> = norms.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    diffs.iter().sum::<f64>() / diffs.len() as f64
}

/// Smoothed fluctuation: `f_t = |g_t − g_{t−1}|` averaged over the trailing
/// `min(t−1, window)` values. The output has one entry per norm after the first.
pub fn gradient_fluctuation(norms: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (1..norms.len())
        .map(|t| trailing_mean_abs_diff(&norms[t.saturating_sub(window)..=t]))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceStatus {
    Converging,
    Diverged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceReason {
    NonFiniteLoss,
    SustainedBlowup,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivergenceVerdict {
    pub status: DivergenceStatus,
    pub reason: DivergenceReason,
    pub first_bad_step: Option<u64>,
}

impl DivergenceVerdict {
    pub fn converging() -> Self {
        DivergenceVerdict {
            status: DivergenceStatus::Converging,
            reason: DivergenceReason::None,
            first_bad_step: None,
        }
    }

    pub fn diverged(&self) -> bool {
        self.status == DivergenceStatus::Diverged
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupConfig {
    pub blowup_factor: f64,
    pub patience: usize,
}

impl Default for BlowupConfig {
    fn default() -> Self {
        BlowupConfig {
            blowup_factor: 10.0,
            patience: 100,
        }
    }
}

/// Diverged when a loss is non-finite, or when the loss stays above
/// `blowup_factor ×` the first loss for `patience` consecutive steps.
/// `first_bad_step` is the non-finite step or the first step of the streak.
pub fn divergence_check(trace: &TrainingTrace, cfg: &BlowupConfig) -> DivergenceVerdict {
    let Some(first) = trace.records.first() else {
        return DivergenceVerdict::converging();
    };
    let limit = cfg.blowup_factor * first.loss;
    let mut streak_start = None;
    let mut streak = 0;
    for r in &trace.records {
        if !r.loss.is_finite() {
            return DivergenceVerdict {
                status: DivergenceStatus::Diverged,
                reason: DivergenceReason::NonFiniteLoss,
                first_bad_step: Some(r.step),
            };
        }
        if r.loss > limit {
            streak_start.get_or_insert(r.step);
            streak += 1;
            if streak >= cfg.patience {
                return DivergenceVerdict {
                    status: DivergenceStatus::Diverged,
                    reason: DivergenceReason::SustainedBlowup,
                    first_bad_step: streak_start,
                };
            }
        } else {
            streak = 0;
            streak_start = None;
        }
    }
    DivergenceVerdict::converging()
}
