use super::boxes::{iou, Corners};

/// Greedy NMS: visit boxes by descending score (ties by index), keep a box unless
/// it overlaps an already kept box with IoU above `iou_threshold`; stop at `top_k`.
pub fn nms(boxes: &[Corners], scores: &[f64], iou_threshold: f64, top_k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len().min(scores.len())).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.len() >= top_k {
            break;
        }
        if kept
            .iter()
            .all(|&k| iou(&boxes[k], &boxes[i]) <= iou_threshold)
        {
            kept.push(i);
        }
    }
    kept
}
