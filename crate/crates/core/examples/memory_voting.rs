//! A scene memory over several rounds: matched labels are refreshed,
//! unmatched ones are voted into ignored state and then dropped.

use selftrain3d::memory::{update_memory, EnsembleConfig, Fate, ProxyBatch, SceneMemory};
use selftrain3d::{LabelState, OrientedBox, Point3, PseudoLabelEntry};

fn label(x: f64, score: f64) -> PseudoLabelEntry {
    PseudoLabelEntry {
        bbox: OrientedBox::new(Point3::new(x, 0.0, 0.8), [4.0, 1.8, 1.6], 0.0).unwrap(),
        class_id: "Car".into(),
        score,
        state: LabelState::Positive,
        cnt: 0,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = EnsembleConfig::default();
    let mut memory = SceneMemory::new("scene-0");
    // The car at x=0 is seen every round; the one at x=20 only in round 1.
    let rounds = [
        vec![label(0.0, 0.7), label(20.0, 0.65)],
        vec![label(0.2, 0.8)],
        vec![label(0.1, 0.75)],
        vec![label(0.0, 0.9)],
    ];
    for (k, proxies) in rounds.into_iter().enumerate() {
        let batch = ProxyBatch { scene_id: memory.scene_id.clone(), labels: proxies };
        let upd = update_memory(&memory, &batch, &cfg)?;
        println!(
            "round {}: merged {} cached {} ignored {} discarded {}",
            k + 1,
            upd.count(Fate::Merged),
            upd.count(Fate::Cached),
            upd.count(Fate::Ignored),
            upd.count(Fate::Discarded)
        );
        for e in &upd.memory.entries {
            println!("  x {:>5.2} score {:.2} {:?} cnt {}", e.bbox.cx, e.score, e.state, e.cnt);
        }
        memory = upd.memory;
    }
    Ok(())
}
