//! Detection loss terms and how they combine across domains.

use selftrain3d::losses::{detection_loss, direction_bce, focal_loss, iou_bce_grad, iou_bce_loss, overall_loss, smooth_l1, LossTerms, LossWeights};

fn main() {
    let w = LossWeights::default();
    println!("weights {w:?}");
    for p in [0.1, 0.5, 0.9] {
        println!("p {p}: focal+ {:.4} focal- {:.4} dir {:.4}", focal_loss(p, true), focal_loss(p, false), direction_bce(p, true));
    }
    for r in [-2.0, -0.5, 0.0, 0.5, 2.0] {
        println!("smooth_l1({r}) = {:.4}", smooth_l1(r));
    }
    for u in [0.2, 0.5, 0.8] {
        println!("iou bce(u={u}, target 0.7) = {:.4}, grad {:.4}", iou_bce_loss(u, 0.7), iou_bce_grad(u, 0.7));
    }

    let source = LossTerms { cls: 0.4, reg: 0.3, dir: 0.1, iou: 0.5 };
    let target = LossTerms { cls: 0.6, reg: 0.5, dir: 0.2, iou: 0.6 };
    let (ls, lt) = (source.total(&w), target.total(&w));
    println!("source {ls:.4} target {lt:.4} overall {:.4}", overall_loss(ls, lt, &w));
    assert_eq!(ls, detection_loss(0.4, 0.3, 0.1, 0.5, &w));
}
