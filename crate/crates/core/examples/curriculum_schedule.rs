//! Curriculum data augmentation: per-stage intensities and sampling ranges,
//! and one augmented scene per stage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selftrain3d::augment::{cda_intensity, cda_sampling_range, AugSchedule, CurriculumAugmenter};
use selftrain3d::simdet::{generate_scene, Domain, SceneSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schedule = AugSchedule::default();
    let rounds = 30;
    for stage in 1..=schedule.stages {
        print!("stage {stage}:");
        for (i, e) in schedule.entries.iter().enumerate() {
            let (lo, hi) = cda_sampling_range(&schedule, i, stage)?;
            print!("  {:?} {:.4} [{lo:.3}, {hi:.3}]", e.target, cda_intensity(&schedule, i, stage)?);
        }
        println!();
    }
    let stages: Vec<usize> = (1..=rounds).map(|r| schedule.stage_for_round(r, rounds)).collect();
    println!("stage per round: {stages:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scene = generate_scene(&mut rng, &SceneSpec::default(), "demo", Domain::Target)?;
    let aug = CurriculumAugmenter::new(schedule.clone());
    for stage in 1..=schedule.stages {
        let out = aug.augment(&mut rng, &scene, stage);
        let first = out.gt.first().map(|g| g.bbox.to_array());
        println!("stage {stage}: {} objects, first box {:?}", out.gt.len(), first);
    }
    Ok(())
}
