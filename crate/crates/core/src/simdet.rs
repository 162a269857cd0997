//! Synthetic scenes and a parameterized noisy detector.
//!
//! The detector stands in for a source-trained network evaluated on a
//! shifted target domain. It reproduces the two noise families that matter
//! for pseudo labels: localization noise (center, size and heading
//! perturbations plus a systematic size bias) and classification noise
//! (misses on sparse objects, false positives on clutter, imperfectly
//! calibrated scores).
//!
//! [`improve_model`] is a surrogate for a training round. It shrinks the noise
//! according to pseudo-label quality and makes no claim about real training
//! dynamics.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::geom::{contains, iou_3d, iou_bev, nms_indices, object_to_world, OrientedBox, Point3};
use crate::scoring::{ClassId, Detection};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    #[serde(rename = "class")]
    pub class_id: ClassId,
    #[serde(rename = "box")]
    pub bbox: OrientedBox,
}

impl GtObject {
    pub fn new(bbox: OrientedBox, class: impl Into<String>) -> Self {
        Self {
            class_id: ClassId::new(class),
            bbox,
        }
    }
}

/// One point cloud frame with its (possibly hidden) annotations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: String,
    pub domain: Domain,
    #[serde(with = "point_arrays")]
    pub points: Vec<Point3>,
    pub gt: Vec<GtObject>,
}

mod point_arrays {
    use super::Point3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(pts: &[Point3], s: S) -> Result<S::Ok, S::Error> {
        let arrays: Vec<[f64; 3]> = pts.iter().map(|p| p.to_array()).collect();
        arrays.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Point3>, D::Error> {
        let arrays = Vec::<[f64; 3]>::deserialize(d)?;
        Ok(arrays.into_iter().map(Point3::from).collect())
    }
}

impl Scene {
    pub fn points_in(&self, b: &OrientedBox) -> usize {
        self.points.iter().filter(|p| contains(b, **p)).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub name: ClassId,
    /// Mean `(l, w, h)` in meters.
    pub mean_size: [f64; 3],
    pub std_size: [f64; 3],
    /// Relative frequency among placed objects.
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub min_objects: usize,
    pub max_objects: usize,
    pub classes: Vec<ClassSpec>,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    /// Surface points on an object at `reference_range` meters.
    pub points_at_reference: f64,
    pub reference_range: f64,
    /// Point count falls off as `(reference_range / range)^falloff`.
    pub falloff: f64,
    pub clutter_points: usize,
    pub max_placement_tries: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            min_objects: 4,
            max_objects: 12,
            classes: vec![
                ClassSpec {
                    name: "Car".into(),
                    mean_size: [3.9, 1.6, 1.56],
                    std_size: [0.2, 0.08, 0.08],
                    weight: 3.0,
                },
                ClassSpec {
                    name: "Pedestrian".into(),
                    mean_size: [0.8, 0.6, 1.73],
                    std_size: [0.05, 0.05, 0.08],
                    weight: 1.0,
                },
            ],
            x_range: [0.0, 60.0],
            y_range: [-30.0, 30.0],
            points_at_reference: 120.0,
            reference_range: 10.0,
            falloff: 1.5,
            clutter_points: 200,
            max_placement_tries: 200,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidSpec(m.to_string()));
        if self.min_objects > self.max_objects {
            return bad("min_objects exceeds max_objects");
        }
        if self.max_objects > 0 && self.classes.is_empty() {
            return bad("objects requested but no classes defined");
        }
        if self.x_range[0] >= self.x_range[1] || self.y_range[0] >= self.y_range[1] {
            return bad("empty placement region");
        }
        for c in &self.classes {
            if c.mean_size.iter().any(|v| *v <= 0.0) || c.std_size.iter().any(|v| *v < 0.0) {
                return bad("class sizes must be positive");
            }
            if c.weight <= 0.0 {
                return bad("class weights must be positive");
            }
        }
        if self.reference_range <= 0.0 || self.points_at_reference < 0.0 {
            return bad("point density parameters must be positive");
        }
        Ok(())
    }

    /// Copy of the spec with every class's mean and spread divided by `gap`.
    pub fn shrunk_by(&self, gap: [f64; 3]) -> SceneSpec {
        let mut s = self.clone();
        for c in &mut s.classes {
            for k in 0..3 {
                c.mean_size[k] /= gap[k];
                c.std_size[k] /= gap[k];
            }
        }
        s
    }
}

fn pick_class<'a, R: Rng + ?Sized>(rng: &mut R, classes: &'a [ClassSpec]) -> &'a ClassSpec {
    let total: f64 = classes.iter().map(|c| c.weight).sum();
    let mut t = rng.gen_range(0.0..total);
    for c in classes {
        if t < c.weight {
            return c;
        }
        t -= c.weight;
    }
    classes.last().expect("validated non-empty")
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        mean
    } else {
        Normal::new(mean, std).expect("finite std").sample(rng)
    }
}

fn sample_size<R: Rng + ?Sized>(rng: &mut R, c: &ClassSpec) -> [f64; 3] {
    let mut s = [0.0; 3];
    for k in 0..3 {
        s[k] = gaussian(rng, c.mean_size[k], c.std_size[k]).max(0.2 * c.mean_size[k]);
    }
    s
}

/// Uniform point on the surface of `b`, faces weighted by area.
fn surface_point<R: Rng + ?Sized>(rng: &mut R, b: &OrientedBox) -> Point3 {
    let (l, w, h) = (b.l, b.w, b.h);
    let areas = [w * h, w * h, l * h, l * h, l * w, l * w];
    let total: f64 = areas.iter().sum();
    let mut t = rng.gen_range(0.0..total);
    let mut face = 5;
    for (i, a) in areas.iter().enumerate() {
        if t < *a {
            face = i;
            break;
        }
        t -= a;
    }
    let mut u = |half: f64| rng.gen_range(-half..=half);
    let q = match face {
        0 => Point3::new(l / 2.0, u(w / 2.0), u(h / 2.0)),
        1 => Point3::new(-l / 2.0, u(w / 2.0), u(h / 2.0)),
        2 => Point3::new(u(l / 2.0), w / 2.0, u(h / 2.0)),
        3 => Point3::new(u(l / 2.0), -w / 2.0, u(h / 2.0)),
        4 => Point3::new(u(l / 2.0), u(w / 2.0), h / 2.0),
        _ => Point3::new(u(l / 2.0), u(w / 2.0), -h / 2.0),
    };
    object_to_world(q, b)
}

/// Number of surface points an object at `range` meters receives.
pub fn expected_points(spec: &SceneSpec, range: f64) -> f64 {
    let r = range.max(spec.reference_range);
    spec.points_at_reference * (spec.reference_range / r).powf(spec.falloff)
}

/// Places non-overlapping objects (pairwise BEV IoU below 0.1) on the
/// ground plane, samples their surfaces with range-dependent density, and
/// scatters ground clutter.
pub fn generate_scene<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &SceneSpec,
    scene_id: &str,
    domain: Domain,
) -> Result<Scene, SimError> {
    spec.validate()?;
    let n_objects = rng.gen_range(spec.min_objects..=spec.max_objects);
    let mut gt: Vec<GtObject> = Vec::with_capacity(n_objects);
    for object in 0..n_objects {
        let class = pick_class(rng, &spec.classes);
        let size = sample_size(rng, class);
        let mut placed = None;
        for _ in 0..spec.max_placement_tries {
            let x = rng.gen_range(spec.x_range[0]..spec.x_range[1]);
            let y = rng.gen_range(spec.y_range[0]..spec.y_range[1]);
            let yaw = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let b = OrientedBox::new(Point3::new(x, y, size[2] / 2.0), size, yaw)?;
            if gt.iter().all(|g| iou_bev(&g.bbox, &b) < 0.1) {
                placed = Some(b);
                break;
            }
        }
        let bbox = placed.ok_or_else(|| SimError::InfeasiblePlacement {
            scene: scene_id.to_string(),
            object,
            tries: spec.max_placement_tries,
        })?;
        gt.push(GtObject {
            class_id: class.name.clone(),
            bbox,
        });
    }

    let mut points = Vec::new();
    for g in &gt {
        let range = g.bbox.cx.hypot(g.bbox.cy);
        let n = expected_points(spec, range).round() as usize;
        points.extend((0..n).map(|_| surface_point(rng, &g.bbox)));
    }
    for _ in 0..spec.clutter_points {
        let x = rng.gen_range(spec.x_range[0]..spec.x_range[1]);
        let y = rng.gen_range(spec.y_range[0]..spec.y_range[1]);
        points.push(Point3::new(x, y, gaussian(rng, 0.0, 0.05)));
    }

    Ok(Scene {
        scene_id: scene_id.to_string(),
        domain,
        points,
        gt,
    })
}

/// Noise parameters of the synthetic detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Center jitter per axis, meters.
    pub translation_sigma: [f64; 3],
    /// Multiplicative size bias per axis; 1.0 means unbiased.
    pub size_bias: [f64; 3],
    /// Spread of the multiplicative size factor per axis.
    pub size_sigma: [f64; 3],
    pub yaw_sigma: f64,
    /// Noise on the classification confidence around the true IoU.
    pub score_sigma: f64,
    /// Noise on the predicted IoU around the true IoU.
    pub iou_sigma: f64,
    /// Mean false positives per scene (Poisson).
    pub fp_rate: f64,
    pub fp_score_range: [f64; 2],
    pub fp_iou_range: [f64; 2],
    /// Miss probability floor, applied regardless of density.
    pub miss_floor: f64,
    /// Weight of the density-driven miss term.
    pub miss_scale: f64,
    /// Point count at which the density-driven miss term is one half.
    pub miss_midpoint: f64,
    pub miss_width: f64,
    /// Detector-side NMS threshold.
    pub nms_iou: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            translation_sigma: [0.12, 0.12, 0.05],
            size_bias: [1.0; 3],
            size_sigma: [0.04; 3],
            yaw_sigma: 0.06,
            score_sigma: 0.15,
            iou_sigma: 0.08,
            fp_rate: 2.0,
            fp_score_range: [0.2, 0.85],
            fp_iou_range: [0.1, 0.6],
            miss_floor: 0.03,
            miss_scale: 0.9,
            miss_midpoint: 8.0,
            miss_width: 3.0,
            nms_iou: 0.1,
        }
    }
}

impl NoiseModel {
    /// A detector that reproduces ground truth exactly.
    pub fn perfect() -> Self {
        Self {
            translation_sigma: [0.0; 3],
            size_bias: [1.0; 3],
            size_sigma: [0.0; 3],
            yaw_sigma: 0.0,
            score_sigma: 0.0,
            iou_sigma: 0.0,
            fp_rate: 0.0,
            miss_floor: 0.0,
            miss_scale: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let sigmas = self
            .translation_sigma
            .iter()
            .chain(&self.size_sigma)
            .chain([&self.yaw_sigma, &self.score_sigma, &self.iou_sigma]);
        let bad = |m: &str| Err(SimError::InvalidSpec(m.to_string()));
        if sigmas.into_iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("noise sigmas must be finite and non-negative");
        }
        if self.size_bias.iter().any(|b| *b <= 0.0) {
            return bad("size bias must be positive");
        }
        if self.fp_rate < 0.0 {
            return bad("fp_rate must be non-negative");
        }
        for r in [self.fp_score_range, self.fp_iou_range] {
            if !(0.0 <= r[0] && r[0] <= r[1] && r[1] <= 1.0) {
                return bad("score ranges must be ordered inside [0, 1]");
            }
        }
        for v in [self.miss_floor, self.miss_scale, self.nms_iou] {
            if !(0.0..=1.0).contains(&v) {
                return bad("miss rates and nms threshold must lie in [0, 1]");
            }
        }
        if self.miss_width <= 0.0 {
            return bad("miss_width must be positive");
        }
        Ok(())
    }

    /// Probability of missing an object covered by `n_points` points.
    pub fn miss_probability(&self, n_points: usize) -> f64 {
        let sparse = 1.0 / (1.0 + ((n_points as f64 - self.miss_midpoint) / self.miss_width).exp());
        (self.miss_floor + (1.0 - self.miss_floor) * self.miss_scale * sparse).clamp(0.0, 1.0)
    }
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Emits detections for `scene` under `model`.
///
/// Each ground-truth object survives the miss test with a perturbed box; its
/// confidence and predicted IoU are the true IoU plus Gaussian noise. False
/// positives are dropped uniformly over the scene. Output goes through
/// class-wise NMS on confidence.
pub fn detect<R: Rng + ?Sized>(scene: &Scene, model: &NoiseModel, rng: &mut R) -> Vec<Detection> {
    let mut dets = Vec::with_capacity(scene.gt.len());
    for g in &scene.gt {
        let n_points = scene.points_in(&g.bbox);
        let miss = model.miss_probability(n_points);
        if miss > 0.0 && rng.gen_bool(miss) {
            continue;
        }
        let b = g.bbox;
        let t = model.translation_sigma;
        let center = Point3::new(
            gaussian(rng, b.cx, t[0]),
            gaussian(rng, b.cy, t[1]),
            gaussian(rng, b.cz, t[2]),
        );
        let mut size = b.size();
        for k in 0..3 {
            let f = gaussian(rng, model.size_bias[k], model.size_sigma[k]).max(0.1);
            size[k] *= f;
        }
        let yaw = gaussian(rng, b.yaw, model.yaw_sigma);
        let pred = b.with_center(center).with_size(size).with_yaw(yaw);
        let true_iou = iou_3d(&pred, &b);
        let p = clamp01(gaussian(rng, true_iou, model.score_sigma));
        let u = clamp01(gaussian(rng, true_iou, model.iou_sigma));
        dets.push(Detection {
            bbox: pred,
            class_id: g.class_id.clone(),
            p,
            u: Some(u),
        });
    }

    if model.fp_rate > 0.0 {
        let n_fp = Poisson::new(model.fp_rate)
            .map(|d| d.sample(rng) as usize)
            .unwrap_or(0);
        for _ in 0..n_fp {
            if let Some(d) = false_positive(scene, model, rng) {
                dets.push(d);
            }
        }
    }

    class_wise_nms(dets, model.nms_iou)
}

fn false_positive<R: Rng + ?Sized>(
    scene: &Scene,
    model: &NoiseModel,
    rng: &mut R,
) -> Option<Detection> {
    // FPs copy the size and class of a random object in the scene; in an
    // empty scene there is nothing to mimic.
    let template = &scene.gt.get(rng.gen_range(0..scene.gt.len().max(1)))?;
    let (xs, ys) = scene_extent(scene);
    let x = rng.gen_range(xs[0]..=xs[1]);
    let y = rng.gen_range(ys[0]..=ys[1]);
    let yaw = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let size = template.bbox.size();
    let bbox = OrientedBox::new(Point3::new(x, y, size[2] / 2.0), size, yaw).ok()?;
    let draw = |rng: &mut R, r: [f64; 2]| if r[0] < r[1] { rng.gen_range(r[0]..=r[1]) } else { r[0] };
    let p = draw(rng, model.fp_score_range);
    let u = draw(rng, model.fp_iou_range);
    Some(Detection {
        bbox,
        class_id: template.class_id.clone(),
        p,
        u: Some(u),
    })
}

fn scene_extent(scene: &Scene) -> ([f64; 2], [f64; 2]) {
    let mut xs = [f64::INFINITY, f64::NEG_INFINITY];
    let mut ys = [f64::INFINITY, f64::NEG_INFINITY];
    for p in scene
        .points
        .iter()
        .copied()
        .chain(scene.gt.iter().map(|g| g.bbox.center()))
    {
        xs = [xs[0].min(p.x), xs[1].max(p.x)];
        ys = [ys[0].min(p.y), ys[1].max(p.y)];
    }
    (xs, ys)
}

/// Greedy NMS within each class on `p`, output in descending confidence.
pub fn class_wise_nms(dets: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    let mut classes: Vec<&ClassId> = dets.iter().map(|d| &d.class_id).collect();
    classes.sort();
    classes.dedup();
    let mut keep: Vec<usize> = Vec::with_capacity(dets.len());
    for class in classes {
        let idx: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].class_id == *class).collect();
        let boxes: Vec<OrientedBox> = idx.iter().map(|&i| dets[i].bbox).collect();
        let scores: Vec<f64> = idx.iter().map(|&i| dets[i].p).collect();
        keep.extend(nms_indices(&boxes, &scores, iou_threshold).into_iter().map(|k| idx[k]));
    }
    keep.sort_by(|&a, &b| dets[b].p.total_cmp(&dets[a].p).then(a.cmp(&b)));
    keep.into_iter().map(|i| dets[i].clone()).collect()
}

/// Knobs of the training-round surrogate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImproveKnobs {
    /// Per-round sigma multiplier reached with perfect pseudo labels.
    pub floor: f64,
}

impl Default for ImproveKnobs {
    fn default() -> Self {
        Self { floor: 0.85 }
    }
}

/// Shrinks every noise sigma by `1 − (1 − floor)·ap3d`.
///
/// `ap3d` is the pseudo-label AP in `[0, 1]`: useless labels leave the model
/// alone, perfect labels multiply each sigma by `floor`.
pub fn improve_model(model: &NoiseModel, ap3d: f64, knobs: &ImproveKnobs) -> NoiseModel {
    let quality = ap3d.clamp(0.0, 1.0);
    let factor = 1.0 - (1.0 - knobs.floor.clamp(0.0, 1.0)) * quality;
    let mut m = model.clone();
    for s in m.translation_sigma.iter_mut().chain(m.size_sigma.iter_mut()) {
        *s *= factor;
    }
    m.yaw_sigma *= factor;
    m.score_sigma *= factor;
    m.iou_sigma *= factor;
    m
}
