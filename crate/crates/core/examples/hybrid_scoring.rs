//! Hybrid quality score and the triplet partition into positive, ignored
//! and negative pseudo labels.

use selftrain3d::scoring::{hybrid_score, single_threshold_partition, triplet_partition, TripletThresholds};
use selftrain3d::{Detection, OrientedBox, Point3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bbox = OrientedBox::new(Point3::new(0.0, 0.0, 0.8), [4.0, 1.8, 1.6], 0.0)?;
    let dets: Vec<Detection> = [(0.95, 0.8), (0.7, 0.5), (0.5, 0.3), (0.9, 0.1), (0.2, 0.1)]
        .iter()
        .enumerate()
        .map(|(i, (p, u))| Detection {
            bbox: bbox.with_center(Point3::new(10.0 * i as f64, 0.0, 0.8)),
            class_id: "Car".into(),
            p: *p,
            u: Some(*u),
        })
        .collect();

    let phi = 0.5;
    for d in &dets {
        println!("p {:.2} u {:.2} -> o {:.3}", d.p, d.iou_score(), hybrid_score(d.p, d.iou_score(), phi));
    }

    let t = TripletThresholds::new(0.6, 0.25)?;
    let labels = triplet_partition(&dets, &t, phi);
    println!("triplet: {} kept", labels.len());
    for e in &labels {
        println!("  x {:>4.1} score {:.3} {:?}", e.bbox.cx, e.score, e.state);
    }
    let plain = single_threshold_partition(&dets, 0.6, phi);
    println!("single threshold keeps {}", plain.len());
    Ok(())
}
