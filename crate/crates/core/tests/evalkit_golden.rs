mod common;

use std::path::PathBuf;

use proptest::prelude::*;
use selftrain3d::evalkit::{
    ap_from_ranked, average_precision, error_decomposition, evaluate, match_tp, quality_report,
    EvalScene, IouThresholds, QualityReport, ScoredBox,
};
use selftrain3d::geom::{iou_3d, IouMode};
use selftrain3d::io::{read_json, read_labels, read_scenes};
use selftrain3d::simdet::GtObject;
use selftrain3d::OrientedBox;

use common::{reference_ap40, to_box};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn assert_reports_close(got: &QualityReport, want: &QualityReport) {
    assert_eq!(got.classes.keys().collect::<Vec<_>>(), want.classes.keys().collect::<Vec<_>>());
    for (class, w) in &want.classes {
        let g = &got.classes[class];
        assert_eq!((g.tp_count, g.fp_count, g.fn_count), (w.tp_count, w.fp_count, w.fn_count), "{class}");
        for (name, a, b) in [
            ("ap_bev", g.ap_bev, w.ap_bev),
            ("ap_3d", g.ap_3d, w.ap_3d),
            ("ate", g.ate, w.ate),
            ("ase", g.ase, w.ase),
            ("aoe", g.aoe, w.aoe),
        ] {
            match (a, b) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12, "{class} {name}: {a} vs {b}"),
                (a, b) => assert_eq!(a, b, "{class} {name}"),
            }
        }
    }
}

#[test]
fn golden_files_match_hand_computed_report() {
    let labels = read_labels(&data("golden_preds.jsonl")).unwrap();
    let scenes = read_scenes(&data("golden_gt.jsonl")).unwrap();
    let memories: Vec<_> = labels.into_iter().map(|r| r.into_memory()).collect();
    let got = quality_report(&memories, &scenes, &IouThresholds::default());
    let want: QualityReport = read_json(&data("golden_expected.json")).unwrap();
    assert_reports_close(&got, &want);
}

fn car(x: f64) -> OrientedBox {
    to_box(&[x, 0.0, 0.8, 4.0, 1.8, 1.6, 0.0])
}

fn scored(b: OrientedBox, s: f64) -> ScoredBox {
    ScoredBox { bbox: b, class_id: "Car".into(), score: s }
}

#[test]
fn three_prediction_golden() {
    let scene = EvalScene {
        preds: vec![scored(car(0.0), 0.9), scored(car(-40.0), 0.8), scored(car(10.0), 0.7)],
        gt: vec![GtObject::new(car(0.0), "Car"), GtObject::new(car(10.0), "Car")],
    };
    let ap = average_precision(&[scene], &"Car".into(), &IouThresholds::default(), IouMode::Iou3d).unwrap();
    assert!((ap - 5.0 / 6.0).abs() < 1e-12);
}

#[test]
fn empty_cases() {
    assert_eq!(ap_from_ranked(&[], 0), None);
    assert_eq!(ap_from_ranked(&[false, false], 0), None);
    assert_eq!(ap_from_ranked(&[], 3), Some(0.0));
    let scene = EvalScene { preds: vec![], gt: vec![GtObject::new(car(0.0), "Car")] };
    let q = evaluate(&[scene], &IouThresholds::default());
    let c = &q.classes[&"Car".into()];
    assert_eq!((c.tp_count, c.fn_count, c.ap_3d, c.ate), (0, 1, Some(0.0), None));
    assert_eq!(error_decomposition(&[]), None);
}

#[test]
fn car_threshold_is_stricter() {
    // Shifted by 0.8 m along the length: IoU 3.2 / 4.8 = 2/3.
    let shifted = car(0.8);
    assert!((iou_3d(&shifted, &car(0.0)) - 2.0 / 3.0).abs() < 1e-12);
    let gt = vec![GtObject::new(car(0.0), "Car")];
    let m = match_tp(&[scored(shifted, 0.9)], &gt, &IouThresholds::default(), IouMode::Iou3d);
    assert!(m.pairs.is_empty());
    let m = match_tp(&[scored(shifted, 0.9)], &gt, &IouThresholds::uniform(0.5), IouMode::Iou3d);
    assert_eq!(m.pairs.len(), 1);
}

fn arb_scene() -> impl Strategy<Value = EvalScene> {
    (
        prop::collection::vec((0..8usize, -1.0..1.0f64, -0.3..0.3f64), 0..8),
        prop::collection::vec((0..8usize, -1.5..1.5f64, -0.5..0.5f64, 0.0..1.0f64), 0..10),
    )
        .prop_map(|(gt, preds)| EvalScene {
            gt: gt
                .iter()
                .map(|(slot, dx, yaw)| GtObject::new(to_box(&[8.0 * *slot as f64 + dx, 0.0, 0.8, 4.0, 1.8, 1.6, *yaw]), "Car"))
                .collect(),
            preds: preds
                .iter()
                .map(|(slot, dx, yaw, s)| scored(to_box(&[8.0 * *slot as f64 + dx, 0.3, 0.8, 4.2, 1.8, 1.6, *yaw]), *s))
                .collect(),
        })
}

/// Greedy matching written out with explicit loops.
fn reference_match(preds: &[ScoredBox], gt: &[GtObject], thr: f64) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.partial_cmp(&preds[a].score).unwrap().then(a.cmp(&b)));
    let mut used = vec![false; gt.len()];
    let mut out = Vec::new();
    for i in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, obj) in gt.iter().enumerate() {
            let v = iou_3d(&preds[i].bbox, &obj.bbox);
            if !used[g] && v >= thr && best.map_or(true, |(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            used[g] = true;
            out.push((i, g));
        }
    }
    out.sort_unstable();
    out
}

proptest! {
    #[test]
    fn ap_matches_reference(flags in prop::collection::vec(any::<bool>(), 0..60), extra in 0..10usize) {
        let n_gt = flags.iter().filter(|f| **f).count() + extra;
        prop_assume!(n_gt > 0);
        let ap = ap_from_ranked(&flags, n_gt).unwrap();
        prop_assert!((ap - reference_ap40(&flags, n_gt)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ap));
    }

    #[test]
    fn removing_a_false_positive_never_hurts(flags in prop::collection::vec(any::<bool>(), 1..40), pick in any::<prop::sample::Index>()) {
        let n_gt = flags.iter().filter(|f| **f).count().max(1);
        let fps: Vec<usize> = (0..flags.len()).filter(|&i| !flags[i]).collect();
        prop_assume!(!fps.is_empty());
        let mut fewer = flags.clone();
        fewer.remove(fps[pick.index(fps.len())]);
        prop_assert!(ap_from_ranked(&fewer, n_gt).unwrap() + 1e-12 >= ap_from_ranked(&flags, n_gt).unwrap());
    }

    #[test]
    fn demoting_a_true_positive_never_helps(flags in prop::collection::vec(any::<bool>(), 1..40), pick in any::<prop::sample::Index>()) {
        let n_gt = flags.iter().filter(|f| **f).count().max(1);
        let tps: Vec<usize> = (0..flags.len()).filter(|&i| flags[i]).collect();
        prop_assume!(!tps.is_empty());
        let mut moved = flags.clone();
        moved.remove(tps[pick.index(tps.len())]);
        moved.push(true);
        prop_assert!(ap_from_ranked(&moved, n_gt).unwrap() <= ap_from_ranked(&flags, n_gt).unwrap() + 1e-12);
    }

    #[test]
    fn matching_agrees_with_reference(scene in arb_scene(), thr in 0.3..0.8f64) {
        let m = match_tp(&scene.preds, &scene.gt, &IouThresholds::uniform(thr), IouMode::Iou3d);
        let mut got: Vec<(usize, usize)> = m.pairs.iter().map(|p| (p.pred, p.gt)).collect();
        got.sort_unstable();
        prop_assert_eq!(&got, &reference_match(&scene.preds, &scene.gt, thr));
        let mut gts: Vec<usize> = m.pairs.iter().map(|p| p.gt).collect();
        gts.sort_unstable();
        gts.dedup();
        prop_assert_eq!(gts.len(), m.pairs.len());
        prop_assert_eq!(m.pairs.len() + m.false_positives.len(), scene.preds.len());
        prop_assert_eq!(m.pairs.len() + m.false_negatives.len(), scene.gt.len());
    }

    #[test]
    fn errors_ignore_full_turns(
        pairs in prop::collection::vec(((-5.0..5.0f64, -3.2..3.2f64), (-5.0..5.0f64, -3.2..3.2f64)), 1..10),
        turns in -3i32..3,
    ) {
        let mk = |x: f64, yaw: f64| OrientedBox { cx: x, cy: 0.0, cz: 0.8, l: 4.0, w: 1.8, h: 1.6, yaw };
        let base: Vec<(OrientedBox, OrientedBox)> = pairs.iter().map(|((x1, y1), (x2, y2))| (mk(*x1, *y1), mk(*x2, *y2))).collect();
        let shift = 2.0 * std::f64::consts::PI * turns as f64;
        let turned: Vec<(OrientedBox, OrientedBox)> = base.iter().map(|(p, g)| (OrientedBox { yaw: p.yaw + shift, ..*p }, *g)).collect();
        let a = error_decomposition(&base).unwrap();
        let b = error_decomposition(&turned).unwrap();
        prop_assert!((0.0..=std::f64::consts::PI + 1e-12).contains(&a.aoe));
        prop_assert!((a.ate - b.ate).abs() <= 1e-9);
        prop_assert!((a.ase - b.ase).abs() <= 1e-9);
        prop_assert!((a.aoe - b.aoe).abs() <= 1e-9);
    }
}
