//! IoU between rotated boxes, in bird's-eye view and in 3D, and class-free NMS.

use std::f64::consts::FRAC_PI_4;

use selftrain3d::geom::{iou_3d, iou_bev, nms};
use selftrain3d::{OrientedBox, Point3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = OrientedBox::new(Point3::new(0.0, 0.0, 0.8), [4.0, 1.8, 1.6], 0.0)?;
    for yaw in [0.0, FRAC_PI_4 / 2.0, FRAC_PI_4, 2.0 * FRAC_PI_4] {
        let b = a.with_yaw(yaw);
        println!("yaw {yaw:.3}: bev {:.4}  3d {:.4}", iou_bev(&a, &b), iou_3d(&a, &b));
    }

    let lifted = a.with_center(Point3::new(0.5, 0.2, 1.2));
    println!("shifted and lifted: bev {:.4}  3d {:.4}", iou_bev(&a, &lifted), iou_3d(&a, &lifted));

    let candidates = vec![
        (a, 0.9),
        (a.with_center(Point3::new(0.3, 0.1, 0.8)), 0.8),
        (a.with_center(Point3::new(8.0, 0.0, 0.8)), 0.7),
    ];
    let kept = nms(&candidates, 0.5);
    println!("nms keeps {} of {}", kept.len(), candidates.len());
    for (b, s) in kept {
        println!("  {:?} score {s}", b.to_array());
    }
    Ok(())
}
