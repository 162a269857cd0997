//! Object- and world-level augmentation, random object scaling (ROS) and the
//! curriculum intensity schedule.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::AugmentError;
use crate::geom::{contains, object_to_world, world_to_object, OrientedBox, Point3, RotationZ};
use crate::simdet::Scene;

/// Per-axis scale factors applied in the object frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectScaleFactors {
    pub r_l: f64,
    pub r_w: f64,
    pub r_h: f64,
}

impl ObjectScaleFactors {
    pub const IDENTITY: ObjectScaleFactors = ObjectScaleFactors {
        r_l: 1.0,
        r_w: 1.0,
        r_h: 1.0,
    };

    pub fn new(r_l: f64, r_w: f64, r_h: f64) -> Result<Self, AugmentError> {
        let all_ok = [r_l, r_w, r_h].iter().all(|r| r.is_finite() && *r > 0.0);
        if !all_ok {
            return Err(AugmentError::NonPositiveFactor([r_l, r_w, r_h]));
        }
        Ok(Self { r_l, r_w, r_h })
    }

    pub fn uniform(r: f64) -> Result<Self, AugmentError> {
        Self::new(r, r, r)
    }
}

/// Scales the object in `bbox` and the points on it about the box center.
///
/// Points go to the object frame, get multiplied per axis by the factors and
/// come back to the world frame. The box keeps its center and heading.
/// Every point must lie inside `bbox`; callers filter first.
pub fn random_object_scale(
    points: &[Point3],
    bbox: &OrientedBox,
    factors: ObjectScaleFactors,
) -> Result<(Vec<Point3>, OrientedBox), AugmentError> {
    if let Some(index) = points.iter().position(|p| !contains(bbox, *p)) {
        return Err(AugmentError::PointOutsideBox { index });
    }
    let scaled_box = bbox.with_size([
        bbox.l * factors.r_l,
        bbox.w * factors.r_w,
        bbox.h * factors.r_h,
    ]);
    let out = points
        .iter()
        .map(|p| scale_point(*p, bbox, &scaled_box, factors))
        .collect();
    Ok((out, scaled_box))
}

fn scale_point(
    p: Point3,
    bbox: &OrientedBox,
    target: &OrientedBox,
    f: ObjectScaleFactors,
) -> Point3 {
    let q = world_to_object(p, bbox);
    object_to_world(Point3::new(q.x * f.r_l, q.y * f.r_w, q.z * f.r_h), target)
}

/// Draws independent per-axis factors, each uniform in `[lo, hi]`.
pub fn sample_ros_factors<R: Rng + ?Sized>(
    rng: &mut R,
    lo: f64,
    hi: f64,
) -> Result<ObjectScaleFactors, AugmentError> {
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(AugmentError::InvalidRange { lo, hi });
    }
    let mut draw = || if lo == hi { lo } else { rng.gen_range(lo..=hi) };
    Ok(ObjectScaleFactors {
        r_l: draw(),
        r_w: draw(),
        r_h: draw(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugKind {
    Rotation,
    Scaling,
}

/// Which transform an intensity entry drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugTarget {
    WorldRotation,
    WorldScaling,
    ObjectRotation,
    ObjectScaling,
}

impl AugTarget {
    pub fn kind(self) -> AugKind {
        match self {
            AugTarget::WorldRotation | AugTarget::ObjectRotation => AugKind::Rotation,
            AugTarget::WorldScaling | AugTarget::ObjectScaling => AugKind::Scaling,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugEntry {
    pub target: AugTarget,
    /// Intensity at stage 1.
    pub initial_intensity: f64,
}

/// Multi-step geometric intensity schedule: stage `s` of `E` runs at
/// `δ_0 · ρ^(s−1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugSchedule {
    pub entries: Vec<AugEntry>,
    pub ratio: f64,
    pub stages: usize,
}

impl Default for AugSchedule {
    fn default() -> Self {
        Self {
            entries: vec![
                AugEntry {
                    target: AugTarget::WorldRotation,
                    initial_intensity: std::f64::consts::FRAC_PI_4,
                },
                AugEntry {
                    target: AugTarget::WorldScaling,
                    initial_intensity: 0.05,
                },
                AugEntry {
                    target: AugTarget::ObjectRotation,
                    initial_intensity: std::f64::consts::PI / 20.0,
                },
                AugEntry {
                    target: AugTarget::ObjectScaling,
                    initial_intensity: 0.05,
                },
            ],
            ratio: 1.2,
            stages: 4,
        }
    }
}

impl AugSchedule {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(self.ratio > 1.0 && self.ratio.is_finite()) {
            return Err(AugmentError::InvalidSchedule(format!(
                "ratio must exceed 1, got {}",
                self.ratio
            )));
        }
        if self.stages == 0 {
            return Err(AugmentError::InvalidSchedule("need at least one stage".into()));
        }
        if let Some(e) = self
            .entries
            .iter()
            .find(|e| !(e.initial_intensity >= 0.0 && e.initial_intensity.is_finite()))
        {
            return Err(AugmentError::InvalidSchedule(format!(
                "negative intensity for {:?}",
                e.target
            )));
        }
        if let Some(e) = self
            .entries
            .iter()
            .find(|e| e.target.kind() == AugKind::Scaling && e.initial_intensity >= 1.0)
        {
            // Scaling ranges would reach zero by stage 1.
            return Err(AugmentError::InvalidSchedule(format!(
                "scaling intensity for {:?} must stay below 1",
                e.target
            )));
        }
        Ok(())
    }

    fn entry(&self, aug_index: usize) -> Result<&AugEntry, AugmentError> {
        self.entries
            .get(aug_index)
            .ok_or(AugmentError::UnknownAugmentation(aug_index))
    }

    fn check_stage(&self, stage: usize) -> Result<(), AugmentError> {
        if (1..=self.stages).contains(&stage) {
            Ok(())
        } else {
            Err(AugmentError::StageOutOfRange {
                stage,
                stages: self.stages,
            })
        }
    }

    pub fn index_of(&self, target: AugTarget) -> Option<usize> {
        self.entries.iter().position(|e| e.target == target)
    }

    /// Stage of a 1-based round when `total_rounds` are split into equal
    /// stages; the last stage absorbs the remainder.
    pub fn stage_for_round(&self, round: usize, total_rounds: usize) -> usize {
        let per_stage = (total_rounds / self.stages).max(1);
        (round.saturating_sub(1) / per_stage + 1).min(self.stages)
    }
}

pub fn cda_intensity(
    schedule: &AugSchedule,
    aug_index: usize,
    stage: usize,
) -> Result<f64, AugmentError> {
    schedule.check_stage(stage)?;
    let e = schedule.entry(aug_index)?;
    let exp = i32::try_from(stage - 1).expect("stage count fits i32");
    Ok(e.initial_intensity * schedule.ratio.powi(exp))
}

/// Sampling interval at a stage: `[-δ, δ]` for rotations, `[1−δ, 1+δ]` for
/// scalings.
pub fn cda_sampling_range(
    schedule: &AugSchedule,
    aug_index: usize,
    stage: usize,
) -> Result<(f64, f64), AugmentError> {
    let delta = cda_intensity(schedule, aug_index, stage)?;
    Ok(match schedule.entry(aug_index)?.target.kind() {
        AugKind::Rotation => (-delta, delta),
        AugKind::Scaling => (1.0 - delta, 1.0 + delta),
    })
}

/// Global transform applied as flip, then rotation, then scaling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorldAugParams {
    /// Mirror across the x axis (y → −y).
    pub flip: bool,
    pub rotation: f64,
    pub scale: f64,
}

impl Default for WorldAugParams {
    fn default() -> Self {
        Self {
            flip: false,
            rotation: 0.0,
            scale: 1.0,
        }
    }
}

pub fn apply_world_augment(scene: &Scene, params: &WorldAugParams) -> Scene {
    let rot = RotationZ::new(params.rotation);
    let s = params.scale;
    let map_point = |p: Point3| {
        let p = if params.flip {
            Point3::new(p.x, -p.y, p.z)
        } else {
            p
        };
        let p = rot.apply(p);
        Point3::new(p.x * s, p.y * s, p.z * s)
    };
    let mut out = scene.clone();
    for p in &mut out.points {
        *p = map_point(*p);
    }
    for obj in &mut out.gt {
        let b = obj.bbox;
        let yaw = if params.flip { -b.yaw } else { b.yaw } + params.rotation;
        obj.bbox = b
            .with_center(map_point(b.center()))
            .with_size([b.l * s, b.w * s, b.h * s])
            .with_yaw(yaw);
    }
    out
}

/// Per-object rotation about each box center, plus optional per-object
/// scaling. Vectors are indexed like `scene.gt`; missing entries mean no-op.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObjectAugParams {
    pub rotations: Vec<f64>,
    pub scales: Vec<ObjectScaleFactors>,
}

pub fn apply_object_augment(scene: &Scene, params: &ObjectAugParams) -> Scene {
    let mut out = scene.clone();
    // Each point follows the first box that contains it before augmentation.
    let owner: Vec<Option<usize>> = scene
        .points
        .iter()
        .map(|p| scene.gt.iter().position(|g| contains(&g.bbox, *p)))
        .collect();
    let new_boxes: Vec<OrientedBox> = scene
        .gt
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let f = params.scales.get(i).copied().unwrap_or(ObjectScaleFactors::IDENTITY);
            let angle = params.rotations.get(i).copied().unwrap_or(0.0);
            let b = g.bbox;
            b.with_size([b.l * f.r_l, b.w * f.r_w, b.h * f.r_h])
                .with_yaw(b.yaw + angle)
        })
        .collect();
    for (p, o) in out.points.iter_mut().zip(&owner) {
        if let Some(i) = *o {
            let f = params.scales.get(i).copied().unwrap_or(ObjectScaleFactors::IDENTITY);
            *p = scale_point(*p, &scene.gt[i].bbox, &new_boxes[i], f);
        }
    }
    for (g, b) in out.gt.iter_mut().zip(new_boxes) {
        g.bbox = b;
    }
    out
}

/// Samples world and object parameters for a stage of a schedule.
#[derive(Clone, Debug)]
pub struct CurriculumAugmenter {
    pub schedule: AugSchedule,
    pub flip_probability: f64,
}

impl CurriculumAugmenter {
    pub fn new(schedule: AugSchedule) -> Self {
        Self {
            schedule,
            flip_probability: 0.5,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, target: AugTarget, stage: usize) -> Option<f64> {
        let i = self.schedule.index_of(target)?;
        let (lo, hi) = cda_sampling_range(&self.schedule, i, stage).ok()?;
        Some(if lo < hi { rng.gen_range(lo..=hi) } else { lo })
    }

    pub fn sample_world<R: Rng + ?Sized>(&self, rng: &mut R, stage: usize) -> WorldAugParams {
        WorldAugParams {
            flip: rng.gen_bool(self.flip_probability),
            rotation: self.draw(rng, AugTarget::WorldRotation, stage).unwrap_or(0.0),
            scale: self.draw(rng, AugTarget::WorldScaling, stage).unwrap_or(1.0),
        }
    }

    pub fn sample_object<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        stage: usize,
        n_objects: usize,
    ) -> ObjectAugParams {
        let rotations = (0..n_objects)
            .map(|_| self.draw(rng, AugTarget::ObjectRotation, stage).unwrap_or(0.0))
            .collect();
        let scales = (0..n_objects)
            .map(|_| {
                let mut d = || self.draw(rng, AugTarget::ObjectScaling, stage).unwrap_or(1.0);
                ObjectScaleFactors {
                    r_l: d(),
                    r_w: d(),
                    r_h: d(),
                }
            })
            .collect();
        ObjectAugParams { rotations, scales }
    }

    /// World then object augmentation of one scene.
    pub fn augment<R: Rng + ?Sized>(&self, rng: &mut R, scene: &Scene, stage: usize) -> Scene {
        let world = self.sample_world(rng, stage);
        let objects = self.sample_object(rng, stage, scene.gt.len());
        apply_object_augment(&apply_world_augment(scene, &world), &objects)
    }
}
