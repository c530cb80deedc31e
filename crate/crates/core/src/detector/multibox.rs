use super::matching::AnchorTarget;
use crate::error::{Error, Result};
use crate::nn::{smooth_l1_scalar, LossBreakdown};
use crate::tensor::Tensor;

pub const DEFAULT_NEG_POS_RATIO: usize = 3;

/// Multibox loss over a batch and its gradients w.r.t. `loc (N, A, 4)` and `cls (N, A, K)`.
///
/// Per image, negatives are ranked by background loss `−log p₀` (ties by anchor
/// index) and the top `neg_pos_ratio · n_pos` enter the confidence loss. Both
/// parts are summed over the batch and divided by the batch's positive count N.
/// When the whole batch has N = 0, each image mines `neg_pos_ratio` negatives
/// and the confidence loss is divided by the number mined.
pub fn multibox_loss(
    loc: &Tensor,
    cls: &Tensor,
    targets: &[Vec<AnchorTarget>],
    neg_pos_ratio: usize,
) -> Result<(LossBreakdown, Tensor, Tensor)> {
    const OP: &str = "multibox_loss";
    let (n, a, k) = match (loc.shape(), cls.shape()) {
        (&[n, a, 4], &[n2, a2, k]) if n == n2 && a == a2 && k >= 2 => (n, a, k),
        _ => {
            return Err(Error::dim(
                OP,
                format!("loc {:?} / cls {:?}", loc.shape(), cls.shape()),
            ))
        }
    };
    if targets.len() != n || targets.iter().any(|t| t.len() != a) {
        return Err(Error::dim(
            OP,
            format!("targets do not cover {n} images of {a} anchors"),
        ));
    }
    let num_pos: usize = targets
        .iter()
        .flatten()
        .filter(|t| matches!(t, AnchorTarget::Positive { .. }))
        .count();

    let mut grad_loc = Tensor::zeros(loc.shape());
    let mut grad_cls = Tensor::zeros(cls.shape());
    let (mut loc_sum, mut conf_sum, mut mined_total) = (0.0, 0.0, 0usize);
    for (img, tgt) in targets.iter().enumerate() {
        let logits = &cls.data()[img * a * k..(img + 1) * a * k];
        let mut selected = Vec::new();
        let mut negatives = Vec::new();
        for (j, t) in tgt.iter().enumerate() {
            match *t {
                AnchorTarget::Positive { class, offsets } => {
                    if class == 0 || class >= k {
                        return Err(Error::Contract(format!(
                            "positive anchor {j} has class {class}"
                        )));
                    }
                    let base = (img * a + j) * 4;
                    for (e, &o) in offsets.iter().enumerate() {
                        let (l, g) = smooth_l1_scalar(loc.data()[base + e] - o);
                        loc_sum += l;
                        grad_loc.data_mut()[base + e] = g;
                    }
                    selected.push((j, class));
                }
                AnchorTarget::Negative => {
                    let (lse, _) = log_sum_exp(&logits[j * k..(j + 1) * k]);
                    negatives.push((lse - logits[j * k], j));
                }
                AnchorTarget::Ignored => {}
            }
        }
        let n_pos_img = selected.len();
        let quota = if num_pos == 0 {
            neg_pos_ratio
        } else {
            neg_pos_ratio * n_pos_img
        };
        negatives.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        for &(_, j) in negatives.iter().take(quota) {
            selected.push((j, 0));
            mined_total += 1;
        }
        for (j, label) in selected {
            let row = &logits[j * k..(j + 1) * k];
            let (lse, max) = log_sum_exp(row);
            conf_sum += lse - row[label];
            let z = lse - max;
            let g = &mut grad_cls.data_mut()[(img * a + j) * k..(img * a + j + 1) * k];
            for (c, (gi, &v)) in g.iter_mut().zip(row).enumerate() {
                *gi = (v - max - z).exp() - if c == label { 1.0 } else { 0.0 };
            }
        }
    }
    let norm = if num_pos > 0 {
        num_pos
    } else {
        mined_total.max(1)
    } as f64;
    grad_loc.scale(1.0 / norm);
    grad_cls.scale(1.0 / norm);
    let (loc_l, conf_l) = (loc_sum / norm, conf_sum / norm);
    Ok((
        LossBreakdown {
            total: loc_l + conf_l,
            loc: loc_l,
            conf: conf_l,
            num_matched: num_pos,
        },
        grad_loc,
        grad_cls,
    ))
}

/// `(log Σ exp(row), max(row))`.
fn log_sum_exp(row: &[f64]) -> (f64, f64) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (
        max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln(),
        max,
    )
}
