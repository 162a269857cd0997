use std::cmp::Ordering;

use super::{iou, IouMode, OrientedBox};

/// Indices of the boxes kept by greedy 3D NMS, highest score first.
///
/// Equal scores keep input order. A box is suppressed when its IoU with an
/// already kept box is strictly above `iou_threshold`.
pub fn nms_indices(boxes: &[OrientedBox], scores: &[f64], iou_threshold: f64) -> Vec<usize> {
    nms_indices_mode(boxes, scores, iou_threshold, IouMode::Iou3d)
}

/// [`nms_indices`] with a selectable overlap measure.
pub fn nms_indices_mode(
    boxes: &[OrientedBox],
    scores: &[f64],
    iou_threshold: f64,
    mode: IouMode,
) -> Vec<usize> {
    assert_eq!(boxes.len(), scores.len(), "one score per box");
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).unwrap_or(Ordering::Equal));

    let mut keep: Vec<usize> = Vec::with_capacity(order.len());
    for &i in &order {
        if keep
            .iter()
            .all(|&k| iou(&boxes[k], &boxes[i], mode) <= iou_threshold)
        {
            keep.push(i);
        }
    }
    keep
}

pub fn nms(boxes: &[(OrientedBox, f64)], iou_threshold: f64) -> Vec<(OrientedBox, f64)> {
    let (b, s): (Vec<_>, Vec<_>) = boxes.iter().copied().unzip();
    nms_indices(&b, &s, iou_threshold)
        .into_iter()
        .map(|i| boxes[i])
        .collect()
}
