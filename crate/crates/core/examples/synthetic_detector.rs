//! Synthetic scenes and the noisy detector that stands in for a trained
//! network.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selftrain3d::evalkit::{match_tp, IouThresholds, ScoredBox};
use selftrain3d::geom::IouMode;
use selftrain3d::simdet::{detect, generate_scene, Domain, NoiseModel, SceneSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let scene = generate_scene(&mut rng, &SceneSpec::default(), "demo", Domain::Target)?;
    println!("{} points, {} objects", scene.points.len(), scene.gt.len());
    for g in &scene.gt {
        println!("  {:<10} {:?} ({} points)", g.class_id.as_str(), g.bbox.size(), scene.points_in(&g.bbox));
    }

    for (name, model) in [("perfect", NoiseModel::perfect()), ("default", NoiseModel::default())] {
        let dets = detect(&scene, &model, &mut rng);
        let scored: Vec<ScoredBox> = dets.iter().map(ScoredBox::from).collect();
        let m = match_tp(&scored, &scene.gt, &IouThresholds::default(), IouMode::Iou3d);
        println!("{name}: {} detections, {} true positives", dets.len(), m.pairs.len());
    }
    Ok(())
}
