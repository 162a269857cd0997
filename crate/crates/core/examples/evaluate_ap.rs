//! Average precision over 40 recall positions and the translation, scale
//! and orientation error breakdown.

use selftrain3d::evalkit::{ap_from_ranked, evaluate, EvalScene, IouThresholds, ScoredBox};
use selftrain3d::simdet::GtObject;
use selftrain3d::{OrientedBox, Point3};

fn car(x: f64, yaw: f64) -> OrientedBox {
    OrientedBox::new(Point3::new(x, 0.0, 0.8), [4.0, 1.8, 1.6], yaw).unwrap()
}

fn main() {
    let ranked = [true, false, true, true, false, false, true, false, true, false];
    println!("AP of ranked list with 6 ground truths: {:.6}", ap_from_ranked(&ranked, 6).unwrap());

    let scene = EvalScene {
        preds: vec![
            ScoredBox { bbox: car(0.1, 0.05), class_id: "Car".into(), score: 0.9 },
            ScoredBox { bbox: car(-30.0, 0.0), class_id: "Car".into(), score: 0.8 },
            ScoredBox { bbox: car(10.3, 0.0), class_id: "Car".into(), score: 0.6 },
        ],
        gt: vec![GtObject::new(car(0.0, 0.0), "Car"), GtObject::new(car(10.0, 0.0), "Car"), GtObject::new(car(25.0, 0.0), "Car")],
    };
    let report = evaluate(&[scene], &IouThresholds::default());
    for (class, q) in &report.classes {
        println!(
            "{}: tp {} fp {} fn {} AP3D {:?} ATE {:?} ASE {:?} AOE {:?}",
            class.as_str(), q.tp_count, q.fp_count, q.fn_count, q.ap_3d, q.ate, q.ase, q.aoe
        );
    }
}
