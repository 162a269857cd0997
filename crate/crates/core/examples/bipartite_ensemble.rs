//! Matching stored labels to fresh ones: greedy consistency against the
//! optimal bipartite assignment, plus the NMS ensemble.

use selftrain3d::geom::IouMode;
use selftrain3d::memory::{ensemble_nms, iou_matrix, match_bipartite, match_consistency, EnsembleConfig, SceneMemory};
use selftrain3d::{LabelState, OrientedBox, Point3, PseudoLabelEntry};

fn car(x: f64, y: f64) -> OrientedBox {
    OrientedBox::new(Point3::new(x, y, 0.8), [4.0, 1.8, 1.6], 0.0).unwrap()
}

fn main() {
    // Two stored boxes both overlap the first fresh box most, so greedy
    // matching leaves one of them out.
    let memory = [car(0.0, 0.0), car(1.6, 0.0)];
    let proxies = [car(0.8, 0.0), car(2.8, 0.0)];
    let a = iou_matrix(&memory, &proxies, IouMode::Iou3d);
    println!("iou matrix {:.3?}", a);

    let greedy = match_consistency(&memory, &proxies, 0.1, IouMode::Iou3d);
    let optimal = match_bipartite(&memory, &proxies, 0.1, IouMode::Iou3d);
    for (name, m) in [("consistency", &greedy), ("bipartite", &optimal)] {
        let pairs: Vec<(usize, usize)> = m.pairs.iter().map(|p| (p.memory, p.proxy)).collect();
        println!("{name}: pairs {pairs:?} total iou {:.3}", m.total_iou());
    }

    let entry = |b: OrientedBox, s: f64| PseudoLabelEntry { bbox: b, class_id: "Car".into(), score: s, state: LabelState::Positive, cnt: 0 };
    let stored = SceneMemory { scene_id: "s".into(), round: 1, entries: memory.iter().map(|b| entry(*b, 0.7)).collect() };
    let fresh: Vec<PseudoLabelEntry> = proxies.iter().map(|b| entry(*b, 0.8)).collect();
    let merged = ensemble_nms(&stored, &fresh, &EnsembleConfig::default());
    println!("nms ensemble keeps {} boxes", merged.entries.len());
}
