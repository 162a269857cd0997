//! Hybrid quality-aware scoring and triplet partition of raw detections.
//!
//! Each detection carries a classification confidence `p` and a predicted IoU
//! `u`. They are blended into one criterion `o = φ·p + (1 − φ)·u`, and the
//! criterion places the box into one of three bands:
//!
//! * `o ≥ T_pos`: positive, supervises training;
//! * `T_neg ≤ o < T_pos`: ignored, kept only to mask an uncertain region;
//! * `o < T_neg`: background, dropped.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geom::OrientedBox;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(String);

impl ClassId {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClassId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

/// One raw detector output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: OrientedBox,
    #[serde(rename = "class")]
    pub class_id: ClassId,
    /// Classification confidence.
    pub p: f64,
    /// Predicted IoU. Detectors without an IoU head leave this empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
}

impl Detection {
    /// The predicted IoU, falling back to `p` when the detector has no IoU head.
    pub fn iou_score(&self) -> f64 {
        self.u.unwrap_or(self.p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelState {
    Positive,
    Ignored,
}

/// A scored pseudo label, either fresh from the partition step or stored in
/// a scene memory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelEntry {
    #[serde(rename = "box")]
    pub bbox: OrientedBox,
    #[serde(rename = "class")]
    pub class_id: ClassId,
    pub score: f64,
    #[serde(default = "default_state")]
    pub state: LabelState,
    /// Consecutive rounds this entry went unmatched.
    #[serde(default)]
    pub cnt: u32,
}

fn default_state() -> LabelState {
    LabelState::Positive
}

/// Output of the partition step for the current round.
pub type ProxyPseudoLabel = PseudoLabelEntry;

pub fn hybrid_score(p: f64, u: f64, phi: f64) -> f64 {
    (phi * p + (1.0 - phi) * u).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletThresholds {
    pub t_pos: f64,
    pub t_neg: f64,
}

impl Default for TripletThresholds {
    fn default() -> Self {
        Self {
            t_pos: 0.6,
            t_neg: 0.25,
        }
    }
}

impl TripletThresholds {
    pub fn new(t_pos: f64, t_neg: f64) -> Result<Self, String> {
        let t = Self { t_pos, t_neg };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), String> {
        if 0.0 <= self.t_neg && self.t_neg < self.t_pos && self.t_pos <= 1.0 {
            Ok(())
        } else {
            Err(format!(
                "need 0 <= t_neg < t_pos <= 1, got t_neg={} t_pos={}",
                self.t_neg, self.t_pos
            ))
        }
    }

    /// `None` means the box is background.
    pub fn classify(&self, o: f64) -> Option<LabelState> {
        if o >= self.t_pos {
            Some(LabelState::Positive)
        } else if o >= self.t_neg {
            Some(LabelState::Ignored)
        } else {
            None
        }
    }
}

pub fn triplet_partition(
    dets: &[Detection],
    thresholds: &TripletThresholds,
    phi: f64,
) -> Vec<ProxyPseudoLabel> {
    dets.iter()
        .filter_map(|d| {
            let o = hybrid_score(d.p, d.iou_score(), phi);
            thresholds.classify(o).map(|state| PseudoLabelEntry {
                bbox: d.bbox,
                class_id: d.class_id.clone(),
                score: o,
                state,
                cnt: 0,
            })
        })
        .collect()
}

/// Plain thresholding: `o ≥ t_pos` is positive, everything else is dropped.
pub fn single_threshold_partition(
    dets: &[Detection],
    t_pos: f64,
    phi: f64,
) -> Vec<ProxyPseudoLabel> {
    dets.iter()
        .filter_map(|d| {
            let o = hybrid_score(d.p, d.iou_score(), phi);
            (o >= t_pos).then(|| PseudoLabelEntry {
                bbox: d.bbox,
                class_id: d.class_id.clone(),
                score: o,
                state: LabelState::Positive,
                cnt: 0,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassScoring {
    pub phi: f64,
    pub t_pos: f64,
    pub t_neg: f64,
}

impl Default for ClassScoring {
    fn default() -> Self {
        let t = TripletThresholds::default();
        Self {
            phi: 0.3,
            t_pos: t.t_pos,
            t_neg: t.t_neg,
        }
    }
}

impl ClassScoring {
    pub fn thresholds(&self) -> TripletThresholds {
        TripletThresholds {
            t_pos: self.t_pos,
            t_neg: self.t_neg,
        }
    }
}

/// Per-class scoring knobs with a shared default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringConfig {
    /// When false, the ignore band is dropped and only `t_pos` is used.
    pub triplet: bool,
    pub phi: f64,
    pub t_pos: f64,
    pub t_neg: f64,
    pub per_class: BTreeMap<ClassId, ClassScoring>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        let c = ClassScoring::default();
        Self {
            triplet: true,
            phi: c.phi,
            t_pos: c.t_pos,
            t_neg: c.t_neg,
            per_class: BTreeMap::new(),
        }
    }
}

impl ScoringConfig {
    pub fn shared(&self) -> ClassScoring {
        ClassScoring {
            phi: self.phi,
            t_pos: self.t_pos,
            t_neg: self.t_neg,
        }
    }

    pub fn for_class(&self, class: &ClassId) -> ClassScoring {
        self.per_class.get(class).copied().unwrap_or_else(|| self.shared())
    }

    pub fn validate(&self) -> Result<(), String> {
        let shared = self.shared();
        for (name, c) in std::iter::once((None, &shared))
            .chain(self.per_class.iter().map(|(k, v)| (Some(k), v)))
        {
            let ctx = name.map(|n| format!(" (class {n})")).unwrap_or_default();
            if !(0.0..=1.0).contains(&c.phi) {
                return Err(format!("phi must lie in [0, 1]{ctx}"));
            }
            c.thresholds().validate().map_err(|e| format!("{e}{ctx}"))?;
        }
        Ok(())
    }

    /// Partitions detections using each detection's class settings.
    pub fn partition(&self, dets: &[Detection]) -> Vec<ProxyPseudoLabel> {
        dets.iter()
            .flat_map(|d| {
                let c = self.for_class(&d.class_id);
                let one = std::slice::from_ref(d);
                if self.triplet {
                    triplet_partition(one, &c.thresholds(), c.phi)
                } else {
                    single_threshold_partition(one, c.t_pos, c.phi)
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point3;

    fn det(p: f64, u: Option<f64>) -> Detection {
        Detection {
            bbox: OrientedBox::new(Point3::ORIGIN, [4.0, 2.0, 1.5], 0.0).unwrap(),
            class_id: "Car".into(),
            p,
            u,
        }
    }

    #[test]
    fn hybrid_endpoints() {
        assert_eq!(hybrid_score(0.9, 0.4, 0.0), 0.4);
        assert_eq!(hybrid_score(0.9, 0.4, 1.0), 0.9);
        assert!((hybrid_score(0.8, 0.6, 0.5) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn bands() {
        let t = TripletThresholds::default();
        assert_eq!(t.classify(0.7), Some(LabelState::Positive));
        assert_eq!(t.classify(0.4), Some(LabelState::Ignored));
        assert_eq!(t.classify(0.1), None);
        assert_eq!(t.classify(0.6), Some(LabelState::Positive));
        assert_eq!(t.classify(0.25), Some(LabelState::Ignored));
    }

    #[test]
    fn partition_drops_negatives_and_zeroes_counters() {
        let dets = [det(0.7, Some(0.7)), det(0.4, Some(0.4)), det(0.1, Some(0.1))];
        let out = triplet_partition(&dets, &TripletThresholds::default(), 0.3);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].state, LabelState::Positive);
        assert_eq!(out[1].state, LabelState::Ignored);
        assert!(out.iter().all(|e| e.cnt == 0));
    }

    #[test]
    fn missing_iou_head_falls_back_to_confidence() {
        let d = det(0.65, None);
        assert_eq!(d.iou_score(), 0.65);
        let out = triplet_partition(&[d], &TripletThresholds::default(), 0.0);
        assert_eq!(out[0].state, LabelState::Positive);
    }

    #[test]
    fn thresholds_validate() {
        assert!(TripletThresholds::new(0.6, 0.25).is_ok());
        assert!(TripletThresholds::new(0.3, 0.3).is_err());
        assert!(TripletThresholds::new(1.1, 0.2).is_err());
    }

    #[test]
    fn single_threshold_has_no_ignored() {
        let dets = [det(0.7, Some(0.7)), det(0.4, Some(0.4))];
        let cfg = ScoringConfig {
            triplet: false,
            ..Default::default()
        };
        let out = cfg.partition(&dets);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].state, LabelState::Positive);
    }

    #[test]
    fn per_class_override() {
        let mut cfg = ScoringConfig::default();
        cfg.per_class.insert(
            "Car".into(),
            ClassScoring {
                phi: 0.0,
                t_pos: 0.9,
                t_neg: 0.5,
            },
        );
        let out = cfg.partition(&[det(0.95, Some(0.7))]);
        assert_eq!(out[0].state, LabelState::Ignored);
        assert!((out[0].score - 0.7).abs() < 1e-12);
    }
}
