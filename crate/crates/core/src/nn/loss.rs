use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Multibox loss split into its localization and confidence parts.
///
/// `total == loc + conf`. When no anchor is matched (`num_matched == 0`) the
/// loss is the confidence loss of the mined negatives divided by their count,
/// and `loc` is 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub loc: f64,
    pub conf: f64,
    pub num_matched: usize,
}

/// Smooth-L1 of a single difference `d`: returns `(loss, dloss/dd)`.
pub fn smooth_l1_scalar(d: f64) -> (f64, f64) {
    if d.abs() < 1.0 {
        (0.5 * d * d, d)
    } else {
        (d.abs() - 0.5, d.signum())
    }
}

/// Summed smooth-L1 loss of `pred − target` and its gradient w.r.t. `pred`.
pub fn smooth_l1(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::dim(
            "smooth_l1",
            format!("pred {:?} vs target {:?}", pred.shape(), target.shape()),
        ));
    }
    let mut grad = Tensor::zeros(pred.shape());
    let mut loss = 0.0;
    for ((g, &p), &t) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(target.data())
    {
        let (l, d) = smooth_l1_scalar(p - t);
        loss += l;
        *g = d;
    }
    Ok((loss, grad))
}

/// Max-subtracted softmax of one row.
pub fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Row-wise cross-entropy of `logits (A, K)` against integer labels.
///
/// Returns the per-row loss `−log p(label)` and the gradient `p − onehot`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(Vec<f64>, Tensor)> {
    const OP: &str = "softmax_cross_entropy";
    let (rows, k) = match *logits.shape() {
        [a, k] => (a, k),
        _ => {
            return Err(Error::dim(
                OP,
                format!("expected (A, K) logits, got {:?}", logits.shape()),
            ))
        }
    };
    if k < 2 {
        return Err(Error::dim(OP, format!("need at least 2 classes, got {k}")));
    }
    if labels.len() != rows {
        return Err(Error::dim(
            OP,
            format!("{} labels for {rows} rows", labels.len()),
        ));
    }
    let mut grad = Tensor::zeros(logits.shape());
    let mut losses = Vec::with_capacity(rows);
    for (r, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::Contract(format!(
                "label {label} outside [0, {k}) at row {r}"
            )));
        }
        let row = &logits.data()[r * k..(r + 1) * k];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        losses.push(lse - row[label]);
        let g = &mut grad.data_mut()[r * k..(r + 1) * k];
        for (gi, &v) in g.iter_mut().zip(row) {
            *gi = (v - lse).exp();
        }
        g[label] -= 1.0;
    }
    Ok((losses, grad))
}
