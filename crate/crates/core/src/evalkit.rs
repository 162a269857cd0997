//! Detection quality: class-wise TP matching, AP over 40 recall positions
//! and the translation / scale / orientation error decomposition.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geom::{aligned_iou_3d, iou, yaw_distance, IouMode, OrientedBox};
use crate::memory::SceneMemory;
use crate::scoring::{ClassId, Detection, LabelState, PseudoLabelEntry};
use crate::simdet::{GtObject, Scene};

pub const RECALL_POSITIONS: usize = 40;

/// Matching IoU per class; classes without an entry use `default`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IouThresholds {
    pub default: f64,
    pub per_class: BTreeMap<ClassId, f64>,
}

impl Default for IouThresholds {
    fn default() -> Self {
        Self {
            default: 0.5,
            per_class: BTreeMap::from([(ClassId::new("Car"), 0.7)]),
        }
    }
}

impl IouThresholds {
    pub fn uniform(t: f64) -> Self {
        Self {
            default: t,
            per_class: BTreeMap::new(),
        }
    }

    pub fn for_class(&self, class: &ClassId) -> f64 {
        self.per_class.get(class).copied().unwrap_or(self.default)
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = std::iter::once(&self.default).chain(self.per_class.values());
        for t in all {
            if !(*t > 0.0 && *t <= 1.0) {
                return Err(format!("IoU threshold must lie in (0, 1], got {t}"));
            }
        }
        Ok(())
    }
}

/// A box to be evaluated with the score that ranks it.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredBox {
    pub bbox: OrientedBox,
    pub class_id: ClassId,
    pub score: f64,
}

impl From<&Detection> for ScoredBox {
    fn from(d: &Detection) -> Self {
        Self {
            bbox: d.bbox,
            class_id: d.class_id.clone(),
            score: d.p,
        }
    }
}

impl From<&PseudoLabelEntry> for ScoredBox {
    fn from(e: &PseudoLabelEntry) -> Self {
        Self {
            bbox: e.bbox,
            class_id: e.class_id.clone(),
            score: e.score,
        }
    }
}

/// Predictions and ground truth of one frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalScene {
    pub preds: Vec<ScoredBox>,
    pub gt: Vec<GtObject>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TpPair {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TpMatching {
    pub pairs: Vec<TpPair>,
    /// Unmatched prediction indices.
    pub false_positives: Vec<usize>,
    /// Unclaimed ground-truth indices.
    pub false_negatives: Vec<usize>,
}

impl TpMatching {
    pub fn is_tp(&self, pred: usize) -> bool {
        self.pairs.iter().any(|p| p.pred == pred)
    }
}

/// Predictions in descending score order, ties by index.
fn score_order(preds: &[ScoredBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score).then(a.cmp(&b)));
    order
}

/// Greedy matching in descending score: each prediction claims the
/// highest-IoU unclaimed ground truth of its class at or above the class
/// threshold.
pub fn match_tp(
    preds: &[ScoredBox],
    gt: &[GtObject],
    thresholds: &IouThresholds,
    mode: IouMode,
) -> TpMatching {
    let mut claimed = vec![false; gt.len()];
    let mut out = TpMatching::default();
    for i in score_order(preds) {
        let p = &preds[i];
        let thr = thresholds.for_class(&p.class_id);
        let best = gt
            .iter()
            .enumerate()
            .filter(|(g, o)| !claimed[*g] && o.class_id == p.class_id)
            .map(|(g, o)| (g, iou(&p.bbox, &o.bbox, mode)))
            .filter(|(_, v)| *v >= thr)
            .fold(None, |acc: Option<(usize, f64)>, (g, v)| match acc {
                Some((_, b)) if v <= b => acc,
                _ => Some((g, v)),
            });
        match best {
            Some((g, v)) => {
                claimed[g] = true;
                out.pairs.push(TpPair { pred: i, gt: g, iou: v });
            }
            None => out.false_positives.push(i),
        }
    }
    out.false_positives.sort_unstable();
    out.false_negatives = (0..gt.len()).filter(|g| !claimed[*g]).collect();
    out
}

/// Interpolated AP over recall positions `1/40, 2/40, …, 1` from a ranked
/// list of TP flags. `None` when there is no ground truth.
pub fn ap_from_ranked(ranked_tp: &[bool], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut curve = Vec::with_capacity(ranked_tp.len());
    let mut tp = 0usize;
    for (k, is_tp) in ranked_tp.iter().enumerate() {
        tp += usize::from(*is_tp);
        curve.push((tp as f64 / n_gt as f64, tp as f64 / (k + 1) as f64));
    }
    // Suffix maximum of precision makes the interpolation a lookup.
    let mut best = 0.0f64;
    for pt in curve.iter_mut().rev() {
        best = best.max(pt.1);
        pt.1 = best;
    }
    let mut sum = 0.0;
    let mut j = 0;
    for k in 1..=RECALL_POSITIONS {
        let r = k as f64 / RECALL_POSITIONS as f64;
        while j < curve.len() && curve[j].0 < r {
            j += 1;
        }
        if j < curve.len() {
            sum += curve[j].1;
        }
    }
    Some(sum / RECALL_POSITIONS as f64)
}

/// AP of one class pooled over scenes, ranked by score across all scenes.
pub fn average_precision(
    scenes: &[EvalScene],
    class: &ClassId,
    thresholds: &IouThresholds,
    mode: IouMode,
) -> Option<f64> {
    let mut ranked: Vec<(f64, usize, usize, bool)> = Vec::new();
    let mut n_gt = 0;
    for (s, scene) in scenes.iter().enumerate() {
        let (preds, gt) = class_slice(scene, class);
        n_gt += gt.len();
        let m = match_tp(&preds, &gt, thresholds, mode);
        for (i, p) in preds.iter().enumerate() {
            ranked.push((p.score, s, i, m.is_tp(i)));
        }
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let flags: Vec<bool> = ranked.iter().map(|r| r.3).collect();
    ap_from_ranked(&flags, n_gt)
}

fn class_slice(scene: &EvalScene, class: &ClassId) -> (Vec<ScoredBox>, Vec<GtObject>) {
    (
        scene.preds.iter().filter(|p| p.class_id == *class).cloned().collect(),
        scene.gt.iter().filter(|g| g.class_id == *class).cloned().collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    /// Mean BEV center distance, meters.
    pub ate: f64,
    /// Mean `1 − IoU` after aligning center and heading.
    pub ase: f64,
    /// Mean smallest heading difference, radians.
    pub aoe: f64,
}

/// Errors over `(prediction, ground truth)` pairs; `None` for no pairs.
pub fn error_decomposition(pairs: &[(OrientedBox, OrientedBox)]) -> Option<ErrorStats> {
    if pairs.is_empty() {
        return None;
    }
    let n = pairs.len() as f64;
    let (mut ate, mut ase, mut aoe) = (0.0, 0.0, 0.0);
    for (p, g) in pairs {
        ate += (p.cx - g.cx).hypot(p.cy - g.cy);
        ase += 1.0 - aligned_iou_3d(p.size(), g.size());
        aoe += yaw_distance(p.yaw, g.yaw);
    }
    Some(ErrorStats {
        ate: ate / n,
        ase: ase / n,
        aoe: aoe / n,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassQuality {
    pub tp_count: usize,
    pub fp_count: usize,
    pub fn_count: usize,
    pub ap_bev: Option<f64>,
    pub ap_3d: Option<f64>,
    pub ate: Option<f64>,
    pub ase: Option<f64>,
    pub aoe: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub classes: BTreeMap<ClassId, ClassQuality>,
}

impl QualityReport {
    pub fn total_tp(&self) -> usize {
        self.classes.values().map(|c| c.tp_count).sum()
    }

    /// Mean 3D AP over classes that have ground truth.
    pub fn mean_ap_3d(&self) -> Option<f64> {
        mean(self.classes.values().filter_map(|c| c.ap_3d))
    }

    pub fn mean_ap_bev(&self) -> Option<f64> {
        mean(self.classes.values().filter_map(|c| c.ap_bev))
    }

    /// ASE averaged over all TPs regardless of class.
    pub fn pooled_ase(&self) -> Option<f64> {
        let (num, den) = self
            .classes
            .values()
            .filter_map(|c| c.ase.map(|a| (a * c.tp_count as f64, c.tp_count)))
            .fold((0.0, 0), |(s, n), (a, k)| (s + a, n + k));
        (den > 0).then(|| num / den as f64)
    }
}

fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Per-class counts, AP (BEV and 3D) and TP errors.
///
/// TPs, FPs, FNs and the errors use 3D IoU matching at each class's
/// threshold.
pub fn evaluate(scenes: &[EvalScene], thresholds: &IouThresholds) -> QualityReport {
    let classes: BTreeSet<&ClassId> = scenes
        .iter()
        .flat_map(|s| s.preds.iter().map(|p| &p.class_id).chain(s.gt.iter().map(|g| &g.class_id)))
        .collect();
    let mut report = QualityReport::default();
    for class in classes {
        let mut q = ClassQuality::default();
        let mut pairs = Vec::new();
        for scene in scenes {
            let (preds, gt) = class_slice(scene, class);
            let m = match_tp(&preds, &gt, thresholds, IouMode::Iou3d);
            q.tp_count += m.pairs.len();
            q.fp_count += m.false_positives.len();
            q.fn_count += m.false_negatives.len();
            pairs.extend(m.pairs.iter().map(|p| (preds[p.pred].bbox, gt[p.gt].bbox)));
        }
        q.ap_bev = average_precision(scenes, class, thresholds, IouMode::Bev);
        q.ap_3d = average_precision(scenes, class, thresholds, IouMode::Iou3d);
        if let Some(e) = error_decomposition(&pairs) {
            q.ate = Some(e.ate);
            q.ase = Some(e.ase);
            q.aoe = Some(e.aoe);
        }
        report.classes.insert(class.clone(), q);
    }
    report
}

/// Quality of stored pseudo labels against the hidden ground truth of the
/// same scenes. Only positive entries count; scenes without a memory are
/// evaluated with no predictions.
pub fn quality_report(
    memories: &[SceneMemory],
    gt: &[Scene],
    thresholds: &IouThresholds,
) -> QualityReport {
    let by_id: BTreeMap<&str, &SceneMemory> =
        memories.iter().map(|m| (m.scene_id.as_str(), m)).collect();
    let scenes: Vec<EvalScene> = gt
        .iter()
        .map(|s| EvalScene {
            preds: by_id
                .get(s.scene_id.as_str())
                .map(|m| {
                    m.entries
                        .iter()
                        .filter(|e| e.state == LabelState::Positive)
                        .map(ScoredBox::from)
                        .collect()
                })
                .unwrap_or_default(),
            gt: s.gt.clone(),
        })
        .collect();
    evaluate(&scenes, thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point3;

    fn bx(x: f64, y: f64) -> OrientedBox {
        OrientedBox::new(Point3::new(x, y, 0.8), [4.0, 1.8, 1.6], 0.0).unwrap()
    }

    fn pred(b: OrientedBox, score: f64) -> ScoredBox {
        ScoredBox {
            bbox: b,
            class_id: "Car".into(),
            score,
        }
    }

    #[test]
    fn perfect_predictions() {
        let gt = vec![GtObject::new(bx(0.0, 0.0), "Car"), GtObject::new(bx(10.0, 0.0), "Car")];
        let preds = vec![pred(bx(0.0, 0.0), 0.9), pred(bx(10.0, 0.0), 0.8)];
        let m = match_tp(&preds, &gt, &IouThresholds::default(), IouMode::Iou3d);
        assert_eq!(m.pairs.len(), 2);
        assert!(m.false_positives.is_empty() && m.false_negatives.is_empty());
        let r = evaluate(&[EvalScene { preds, gt }], &IouThresholds::default());
        let c = &r.classes[&ClassId::new("Car")];
        assert_eq!(c.ap_3d, Some(1.0));
        assert_eq!(c.ap_bev, Some(1.0));
        assert_eq!((c.ate, c.ase, c.aoe), (Some(0.0), Some(0.0), Some(0.0)));
    }

    #[test]
    fn one_pred_two_gt() {
        let gt = vec![GtObject::new(bx(0.0, 0.0), "Car"), GtObject::new(bx(0.2, 0.0), "Car")];
        let m = match_tp(&[pred(bx(0.1, 0.0), 0.9)], &gt, &IouThresholds::uniform(0.5), IouMode::Iou3d);
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.false_negatives.len(), 1);
    }

    #[test]
    fn ap_golden_two_tp_one_fp() {
        let ap = ap_from_ranked(&[true, false, true], 2).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(ap_from_ranked(&[false, false], 3), Some(0.0));
        assert_eq!(ap_from_ranked(&[], 0), None);
        assert_eq!(ap_from_ranked(&[], 2), Some(0.0));
    }

    #[test]
    fn errors_of_shift_and_scale() {
        let g = bx(0.0, 0.0);
        let e = error_decomposition(&[(bx(1.0, 0.0), g)]).unwrap();
        assert!((e.ate - 1.0).abs() < 1e-12 && e.ase.abs() < 1e-12 && e.aoe == 0.0);
        let big = g.with_size([4.8, 1.8 * 1.2, 1.6 * 1.2]);
        let e = error_decomposition(&[(big, g)]).unwrap();
        assert!((e.ase - (1.0 - 1.0 / 1.728)).abs() < 1e-12);
        assert!(error_decomposition(&[]).is_none());
    }

    #[test]
    fn empty_memory_gives_no_tp() {
        let scene = Scene {
            scene_id: "a".into(),
            domain: crate::simdet::Domain::Target,
            points: vec![],
            gt: vec![GtObject::new(bx(0.0, 0.0), "Car")],
        };
        let r = quality_report(&[SceneMemory::new("a")], &[scene], &IouThresholds::default());
        let c = &r.classes[&ClassId::new("Car")];
        assert_eq!(c.tp_count, 0);
        assert_eq!(c.ap_3d, Some(0.0));
        assert_eq!(c.fn_count, 1);
        assert!(c.ase.is_none());
    }
}
