//! The self-training loop over a synthetic detector.
//!
//! A surrogate pre-training step turns the configured source/target size gap
//! into the detector's size bias, reduced when random object scaling is on.
//! Each round then detects on every target scene, scores and partitions the
//! detections, folds them into the scene memories, evaluates the memories
//! against the hidden ground truth and lets the surrogate detector improve
//! according to that quality.
//!
//! The curriculum schedule and object scaling act on the per-round loss
//! diagnostic, which runs the round's detector on augmented source scenes;
//! the surrogate has no training step for augmentation to change.
//!
//! Every random draw comes from a per-scene stream seeded by
//! [`scene_seed`], so results do not depend on thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ndarray::Array2;

use crate::augment::{
    apply_object_augment, sample_ros_factors, AugSchedule, CurriculumAugmenter, ObjectAugParams,
};
use crate::dsnorm::{dsnorm_train, DomainBatch, DsNormState};
use crate::error::{Error, Result};
use crate::evalkit::{quality_report, IouThresholds, QualityReport};
use crate::geom::{iou_3d, OrientedBox};
use crate::losses::{direction_bce, focal_loss, iou_bce_loss, overall_loss, smooth_l1, LossTerms, LossWeights};
use crate::memory::{
    update_memory, EnsembleConfig, EnsembleVariant, Fate, MergeStrategy, ProxyBatch, SceneMemory,
};
use crate::scoring::{ClassId, Detection, LabelState, ScoringConfig};
use crate::simdet::{detect, improve_model, ImproveKnobs, NoiseModel, Scene};

const STREAM_DETECT: u64 = 1;
const STREAM_AUGMENT: u64 = 2;
const STREAM_DIAG_SOURCE: u64 = 3;
const STREAM_DIAG_TARGET: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RosConfig {
    pub enabled: bool,
    /// Per-axis scale factor range.
    pub range: [f64; 2],
}

impl Default for RosConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            range: [0.7, 1.1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CdaConfig {
    pub enabled: bool,
    pub flip_probability: f64,
    pub schedule: AugSchedule,
}

impl Default for CdaConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            flip_probability: 0.5,
            schedule: AugSchedule::default(),
        }
    }
}

/// Detector noise that alternates between rounds. Even rounds raise the miss
/// floor and scale the false-positive rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Oscillation {
    pub even_round_miss_floor: f64,
    pub even_round_fp_scale: f64,
}

impl Default for Oscillation {
    fn default() -> Self {
        Self {
            even_round_miss_floor: 0.0,
            even_round_fp_scale: 1.0,
        }
    }
}

impl Oscillation {
    pub fn apply(&self, model: &NoiseModel, round: usize) -> NoiseModel {
        let mut m = model.clone();
        if round % 2 == 0 {
            m.miss_floor = m.miss_floor.max(self.even_round_miss_floor);
            m.fp_rate *= self.even_round_fp_scale;
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub rounds: usize,
    /// Memory is refreshed every this many rounds.
    pub refresh_interval: usize,
    /// Stop early once memory churn drops below this fraction; 0 disables.
    pub early_stop_churn: f64,
    /// Ratio of source to target object size per axis.
    pub size_gap: [f64; 3],
    /// Scenes per domain used for the loss diagnostic.
    pub diagnostic_scenes: usize,
    pub scoring: ScoringConfig,
    pub ensemble: EnsembleConfig,
    pub ros: RosConfig,
    pub cda: CdaConfig,
    pub noise: NoiseModel,
    pub improve: ImproveKnobs,
    pub losses: LossWeights,
    pub eval: IouThresholds,
    pub oscillation: Oscillation,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            rounds: 10,
            refresh_interval: 1,
            early_stop_churn: 0.0,
            size_gap: [1.2; 3],
            diagnostic_scenes: 8,
            scoring: ScoringConfig::default(),
            ensemble: EnsembleConfig::default(),
            ros: RosConfig::default(),
            cda: CdaConfig::default(),
            noise: NoiseModel::default(),
            improve: ImproveKnobs::default(),
            losses: LossWeights::default(),
            eval: IouThresholds::default(),
            oscillation: Oscillation::default(),
        }
    }
}

impl PipelineConfig {
    /// Plain self-training: one score threshold, no memory, no object
    /// scaling, no curriculum.
    pub fn naive(mut self) -> Self {
        self.scoring.triplet = false;
        self.ensemble.enabled = false;
        self.ros.enabled = false;
        self.cda.enabled = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Error::Config(m);
        if self.rounds == 0 {
            return Err(cfg("rounds must be at least 1".into()));
        }
        if self.refresh_interval == 0 {
            return Err(cfg("refresh_interval must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.early_stop_churn) {
            return Err(cfg(format!(
                "early_stop_churn must lie in [0, 1), got {}",
                self.early_stop_churn
            )));
        }
        if self.size_gap.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(cfg("size_gap entries must be positive".into()));
        }
        let [lo, hi] = self.ros.range;
        if !(0.0 < lo && lo <= hi && hi.is_finite()) {
            return Err(cfg(format!("ros.range must satisfy 0 < lo <= hi, got [{lo}, {hi}]")));
        }
        if !(0.0..=1.0).contains(&self.cda.flip_probability) {
            return Err(cfg("cda.flip_probability must lie in [0, 1]".into()));
        }
        let o = &self.oscillation;
        if !(0.0..=1.0).contains(&o.even_round_miss_floor) || !(o.even_round_fp_scale >= 0.0) {
            return Err(cfg("oscillation knobs out of range".into()));
        }
        if !(0.0..=1.0).contains(&self.improve.floor) {
            return Err(cfg("improve.floor must lie in [0, 1]".into()));
        }
        self.scoring.validate().map_err(cfg)?;
        self.ensemble.validate()?;
        self.cda.schedule.validate()?;
        self.noise.validate()?;
        self.losses.validate().map_err(cfg)?;
        self.eval.validate().map_err(cfg)?;
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Seed of the random stream for one scene, round and purpose:
/// `seed ⊕ fnv1a(scene_id) ⊕ splitmix64(round·256 + stream)`, mixed once more.
pub fn scene_seed(seed: u64, scene_id: &str, round: usize, stream: u64) -> u64 {
    let tag = splitmix64(((round as u64) << 8) | stream);
    splitmix64(seed ^ fnv1a(scene_id.as_bytes()) ^ tag)
}

pub fn scene_rng(seed: u64, scene_id: &str, round: usize, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(scene_seed(seed, scene_id, round, stream))
}

/// Pooled per-axis variance of object sizes relative to their class mean.
pub fn relative_size_variance(scenes: &[Scene]) -> Option<[f64; 3]> {
    let mut sums: std::collections::BTreeMap<&ClassId, ([f64; 3], usize)> = Default::default();
    for g in scenes.iter().flat_map(|s| &s.gt) {
        let e = sums.entry(&g.class_id).or_insert(([0.0; 3], 0));
        for k in 0..3 {
            e.0[k] += g.bbox.size()[k];
        }
        e.1 += 1;
    }
    let total: usize = sums.values().map(|v| v.1).sum();
    if total == 0 {
        return None;
    }
    let mut var = [0.0; 3];
    for g in scenes.iter().flat_map(|s| &s.gt) {
        let (sum, n) = sums[&g.class_id];
        for k in 0..3 {
            let rel = g.bbox.size()[k] / (sum[k] / n as f64);
            var[k] += (rel - 1.0).powi(2);
        }
    }
    Some(var.map(|v| v / total as f64))
}

/// Detector noise after source pre-training.
///
/// Without object scaling the detector inherits the full size gap. With it,
/// the gap shrinks by the share of size variance the source data contributes
/// next to the randomized scales: `w = v_src / (v_src + v_ros)` and the bias
/// becomes `1 + w·(gap − 1)` per axis.
pub fn pretrain_surrogate(source: &[Scene], cfg: &PipelineConfig) -> NoiseModel {
    let mut model = cfg.noise.clone();
    let gap = cfg.size_gap;
    let effective = if cfg.ros.enabled {
        let [lo, hi] = cfg.ros.range;
        let v_ros = (hi - lo).powi(2) / 12.0;
        let v_src = relative_size_variance(source);
        let mut out = [0.0; 3];
        for k in 0..3 {
            let w = match v_src {
                Some(v) if v[k] + v_ros > 0.0 => v[k] / (v[k] + v_ros),
                _ => 1.0,
            };
            out[k] = 1.0 + w * (gap[k] - 1.0);
        }
        out
    } else {
        gap
    };
    for k in 0..3 {
        model.size_bias[k] *= effective[k];
    }
    model
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FateCounts {
    pub merged: usize,
    pub cached: usize,
    pub ignored: usize,
    pub discarded: usize,
}

impl FateCounts {
    fn add(&mut self, f: Fate) {
        match f {
            Fate::Merged => self.merged += 1,
            Fate::Cached => self.cached += 1,
            Fate::Ignored => self.ignored += 1,
            Fate::Discarded => self.discarded += 1,
        }
    }

    fn absorb(&mut self, o: &FateCounts) {
        self.merged += o.merged;
        self.cached += o.cached;
        self.ignored += o.ignored;
        self.discarded += o.discarded;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossDiagnostic {
    pub source: LossTerms,
    pub target: LossTerms,
    pub source_total: f64,
    pub target_total: f64,
    pub overall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    /// Curriculum stage, absent when the curriculum is off.
    pub stage: Option<usize>,
    pub refreshed: bool,
    pub n_proxies: usize,
    pub n_pseudo: usize,
    pub n_positive: usize,
    pub n_ignored: usize,
    pub fates: FateCounts,
    pub churn: f64,
    pub quality: QualityReport,
    pub losses: LossDiagnostic,
    /// Running mean `(l, w, h)` of labeled sizes per domain.
    pub source_size_mean: Option<[f64; 3]>,
    pub target_size_mean: Option<[f64; 3]>,
    /// Mean translation sigma of the detector used this round.
    pub detector_translation_sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineState {
    /// Last completed round; 0 before the first.
    pub round: usize,
    pub model: NoiseModel,
    pub memories: Vec<SceneMemory>,
    pub dsnorm: DsNormState,
}

impl PipelineState {
    pub fn new(cfg: &PipelineConfig, source: &[Scene], target: &[Scene]) -> Self {
        Self {
            round: 0,
            model: pretrain_surrogate(source, cfg),
            memories: target.iter().map(|s| SceneMemory::new(s.scene_id.clone())).collect(),
            dsnorm: DsNormState::new(3),
        }
    }
}

struct SceneStep {
    memory: SceneMemory,
    fates: FateCounts,
    n_proxies: usize,
    changed: usize,
    compared: usize,
}

fn churn_of(prev: &[crate::scoring::PseudoLabelEntry], next: &[crate::scoring::PseudoLabelEntry]) -> usize {
    prev.iter().filter(|e| !next.contains(e)).count() + next.iter().filter(|e| !prev.contains(e)).count()
}

/// One generation-and-update round `k` (1-based).
pub fn run_round(
    cfg: &PipelineConfig,
    state: &PipelineState,
    k: usize,
    source: &[Scene],
    target: &[Scene],
) -> Result<(PipelineState, RoundReport)> {
    if k != state.round + 1 {
        return Err(Error::Config(format!(
            "round {k} does not follow completed round {}",
            state.round
        )));
    }
    if state.memories.len() != target.len() {
        return Err(Error::Config(format!(
            "{} memories for {} target scenes",
            state.memories.len(),
            target.len()
        )));
    }
    let model = cfg.oscillation.apply(&state.model, k);
    let stage = cfg
        .cda
        .enabled
        .then(|| cfg.cda.schedule.stage_for_round(k, cfg.rounds));
    let refreshed = (k - 1) % cfg.refresh_interval == 0;

    let steps: Vec<SceneStep> = target
        .par_iter()
        .zip(state.memories.par_iter())
        .map(|(scene, mem)| -> Result<SceneStep> {
            if !refreshed {
                let mut memory = mem.clone();
                memory.round += 1;
                return Ok(SceneStep {
                    compared: 2 * memory.entries.len(),
                    memory,
                    fates: FateCounts::default(),
                    n_proxies: 0,
                    changed: 0,
                });
            }
            let mut rng = scene_rng(cfg.seed, &scene.scene_id, k, STREAM_DETECT);
            let dets = detect(scene, &model, &mut rng);
            let labels = cfg.scoring.partition(&dets);
            let n_proxies = labels.len();
            let batch = ProxyBatch {
                scene_id: scene.scene_id.clone(),
                labels,
            };
            let up = update_memory(mem, &batch, &cfg.ensemble)?;
            let mut fates = FateCounts::default();
            for f in up.memory_fates.iter().chain(&up.proxy_fates) {
                fates.add(*f);
            }
            Ok(SceneStep {
                changed: churn_of(&mem.entries, &up.memory.entries),
                compared: mem.entries.len() + up.memory.entries.len(),
                memory: up.memory,
                fates,
                n_proxies,
            })
        })
        .collect::<Result<_>>()?;

    let mut fates = FateCounts::default();
    let (mut n_proxies, mut changed, mut compared) = (0, 0, 0);
    for s in &steps {
        fates.absorb(&s.fates);
        n_proxies += s.n_proxies;
        changed += s.changed;
        compared += s.compared;
    }
    let memories: Vec<SceneMemory> = steps.into_iter().map(|s| s.memory).collect();
    let n_pseudo: usize = memories.iter().map(|m| m.entries.len()).sum();
    let n_positive: usize = memories.iter().map(|m| m.positives().count()).sum();

    let quality = quality_report(&memories, target, &cfg.eval);
    let losses = loss_diagnostic(cfg, &model, stage, k, source, target, &memories);
    let dsnorm = update_size_stats(&state.dsnorm, source, &memories)?;
    let next_model = improve_model(&state.model, quality.mean_ap_3d().unwrap_or(0.0), &cfg.improve);

    let report = RoundReport {
        round: k,
        stage,
        refreshed,
        n_proxies,
        n_pseudo,
        n_positive,
        n_ignored: n_pseudo - n_positive,
        fates,
        churn: if compared == 0 { 0.0 } else { changed as f64 / compared as f64 },
        quality,
        losses,
        source_size_mean: dsnorm.source.as_ref().map(|s| [s.mean[0], s.mean[1], s.mean[2]]),
        target_size_mean: dsnorm.target.as_ref().map(|s| [s.mean[0], s.mean[1], s.mean[2]]),
        detector_translation_sigma: model.translation_sigma.iter().sum::<f64>() / 3.0,
    };
    let next = PipelineState {
        round: k,
        model: next_model,
        memories,
        dsnorm,
    };
    Ok((next, report))
}

fn size_rows<'a>(boxes: impl Iterator<Item = &'a OrientedBox>) -> Array2<f64> {
    let flat: Vec<f64> = boxes.flat_map(|b| b.size()).collect();
    let n = flat.len() / 3;
    Array2::from_shape_vec((n, 3), flat).expect("three sizes per box")
}

fn update_size_stats(
    state: &DsNormState,
    source: &[Scene],
    memories: &[SceneMemory],
) -> Result<DsNormState> {
    let src = size_rows(source.iter().flat_map(|s| s.gt.iter().map(|g| &g.bbox)));
    let tgt = size_rows(memories.iter().flat_map(|m| m.positives().map(|e| &e.bbox)));
    let (_, next) = dsnorm_train(
        &DomainBatch {
            source: src.view(),
            target: tgt.view(),
        },
        state,
    )?;
    Ok(next)
}

struct LabelRef<'a> {
    bbox: &'a OrientedBox,
    class_id: &'a ClassId,
    state: LabelState,
}

fn loss_terms(dets: &[Detection], labels: &[LabelRef<'_>], thresholds: &IouThresholds) -> (LossTerms, usize, usize) {
    let mut t = LossTerms::default();
    let (mut n_cls, mut n_pos) = (0usize, 0usize);
    for d in dets {
        let best = labels
            .iter()
            .filter(|l| *l.class_id == d.class_id)
            .map(|l| (l, iou_3d(&d.bbox, l.bbox)))
            .fold(None, |acc: Option<(&LabelRef, f64)>, (l, v)| match acc {
                Some((_, b)) if v <= b => acc,
                _ => Some((l, v)),
            });
        let thr = thresholds.for_class(&d.class_id);
        match best {
            Some((l, v)) if v >= thr => {
                if l.state == LabelState::Ignored {
                    continue;
                }
                n_cls += 1;
                n_pos += 1;
                t.cls += focal_loss(d.p, true);
                let g = l.bbox;
                let diag = g.l.hypot(g.w);
                let residuals = [
                    (d.bbox.cx - g.cx) / diag,
                    (d.bbox.cy - g.cy) / diag,
                    (d.bbox.cz - g.cz) / g.h,
                    (d.bbox.l / g.l).ln(),
                    (d.bbox.w / g.w).ln(),
                    (d.bbox.h / g.h).ln(),
                    (d.bbox.yaw - g.yaw).sin(),
                ];
                t.reg += residuals.iter().map(|r| smooth_l1(*r)).sum::<f64>();
                let p_dir = 0.5 * (1.0 + (d.bbox.yaw - g.yaw).cos());
                t.dir += direction_bce(p_dir, true);
                t.iou += iou_bce_loss(d.iou_score(), v);
            }
            _ => {
                n_cls += 1;
                t.cls += focal_loss(d.p, false);
            }
        }
    }
    (t, n_cls, n_pos)
}

fn mean_terms(sum: LossTerms, n_cls: usize, n_pos: usize) -> LossTerms {
    let c = n_cls.max(1) as f64;
    let p = n_pos.max(1) as f64;
    LossTerms {
        cls: sum.cls / c,
        reg: sum.reg / p,
        dir: sum.dir / p,
        iou: sum.iou / p,
    }
}

fn accumulate(acc: &mut (LossTerms, usize, usize), x: (LossTerms, usize, usize)) {
    acc.0.cls += x.0.cls;
    acc.0.reg += x.0.reg;
    acc.0.dir += x.0.dir;
    acc.0.iou += x.0.iou;
    acc.1 += x.1;
    acc.2 += x.2;
}

/// Loss of the round's detector on augmented labeled source scenes and on
/// target scenes supervised by the current pseudo labels.
fn loss_diagnostic(
    cfg: &PipelineConfig,
    model: &NoiseModel,
    stage: Option<usize>,
    k: usize,
    source: &[Scene],
    target: &[Scene],
    memories: &[SceneMemory],
) -> LossDiagnostic {
    let n = cfg.diagnostic_scenes;
    let augmenter = CurriculumAugmenter {
        schedule: cfg.cda.schedule.clone(),
        flip_probability: cfg.cda.flip_probability,
    };
    let mut src_acc = (LossTerms::default(), 0, 0);
    for scene in source.iter().take(n) {
        let mut rng = scene_rng(cfg.seed, &scene.scene_id, k, STREAM_AUGMENT);
        let mut s = match stage {
            Some(st) => augmenter.augment(&mut rng, scene, st),
            None => scene.clone(),
        };
        if cfg.ros.enabled {
            let [lo, hi] = cfg.ros.range;
            let scales = (0..s.gt.len())
                .map(|_| sample_ros_factors(&mut rng, lo, hi).expect("validated range"))
                .collect();
            let rotations = vec![0.0; s.gt.len()];
            s = apply_object_augment(&s, &ObjectAugParams { rotations, scales });
        }
        let mut rng = scene_rng(cfg.seed, &scene.scene_id, k, STREAM_DIAG_SOURCE);
        let dets = detect(&s, model, &mut rng);
        let labels: Vec<LabelRef> = s
            .gt
            .iter()
            .map(|g| LabelRef {
                bbox: &g.bbox,
                class_id: &g.class_id,
                state: LabelState::Positive,
            })
            .collect();
        accumulate(&mut src_acc, loss_terms(&dets, &labels, &cfg.eval));
    }
    let mut tgt_acc = (LossTerms::default(), 0, 0);
    for (scene, mem) in target.iter().zip(memories).take(n) {
        let mut rng = scene_rng(cfg.seed, &scene.scene_id, k, STREAM_DIAG_TARGET);
        let dets = detect(scene, model, &mut rng);
        let labels: Vec<LabelRef> = mem
            .entries
            .iter()
            .map(|e| LabelRef {
                bbox: &e.bbox,
                class_id: &e.class_id,
                state: e.state,
            })
            .collect();
        accumulate(&mut tgt_acc, loss_terms(&dets, &labels, &cfg.eval));
    }
    let source_terms = mean_terms(src_acc.0, src_acc.1, src_acc.2);
    let target_terms = mean_terms(tgt_acc.0, tgt_acc.1, tgt_acc.2);
    let source_total = source_terms.total(&cfg.losses);
    let target_total = target_terms.total(&cfg.losses);
    LossDiagnostic {
        source: source_terms,
        target: target_terms,
        source_total,
        target_total,
        overall: overall_loss(source_total, target_total, &cfg.losses),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub pretrained: NoiseModel,
    pub reports: Vec<RoundReport>,
    pub final_state: PipelineState,
}

fn sorted_by_id(scenes: &[Scene]) -> Vec<Scene> {
    let mut v = scenes.to_vec();
    v.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    v
}

/// Pre-trains the surrogate and runs the configured rounds.
pub fn run(cfg: &PipelineConfig, source: &[Scene], target: &[Scene]) -> Result<RunOutput> {
    run_with(cfg, source, target, |_, _| Ok(()))
}

/// [`run`] with a callback after every round, e.g. for snapshots.
///
/// Scenes are processed in `scene_id` order whatever the input order.
pub fn run_with(
    cfg: &PipelineConfig,
    source: &[Scene],
    target: &[Scene],
    mut on_round: impl FnMut(&RoundReport, &PipelineState) -> Result<()>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let mut ids: Vec<&str> = target.iter().map(|s| s.scene_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("duplicate target scene id {:?}", w[0])));
    }
    let source = sorted_by_id(source);
    let target = sorted_by_id(target);
    let mut state = PipelineState::new(cfg, &source, &target);
    let pretrained = state.model.clone();
    let mut reports = Vec::with_capacity(cfg.rounds);
    for k in 1..=cfg.rounds {
        let (next, report) = run_round(cfg, &state, k, &source, &target)?;
        state = next;
        on_round(&report, &state)?;
        let stop = cfg.early_stop_churn > 0.0 && k > 1 && report.churn < cfg.early_stop_churn;
        reports.push(report);
        if stop {
            break;
        }
    }
    Ok(RunOutput {
        pretrained,
        reports,
        final_state: state,
    })
}

/// Knob grid over memory ensemble variants, merge rules and voting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationGrid {
    pub variants: Vec<EnsembleVariant>,
    pub merges: Vec<MergeStrategy>,
    pub voting: Vec<bool>,
}

impl Default for AblationGrid {
    fn default() -> Self {
        Self {
            variants: vec![
                EnsembleVariant::Consistency,
                EnsembleVariant::Nms,
                EnsembleVariant::Bipartite,
            ],
            merges: vec![MergeStrategy::Max, MergeStrategy::Avg],
            voting: vec![true, false],
        }
    }
}

impl AblationGrid {
    pub fn cells(&self) -> Vec<(EnsembleVariant, MergeStrategy, bool)> {
        let mut out = Vec::new();
        for v in &self.variants {
            for m in &self.merges {
                for vote in &self.voting {
                    out.push((*v, *m, *vote));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: EnsembleVariant,
    pub merge: MergeStrategy,
    pub voting: bool,
    pub rounds: usize,
    pub tp: usize,
    pub ap_bev: Option<f64>,
    pub ap_3d: Option<f64>,
    pub ase: Option<f64>,
    pub n_pseudo: usize,
}

/// Runs the pipeline once per grid cell and summarizes the final round.
pub fn run_ablation(
    cfg: &PipelineConfig,
    grid: &AblationGrid,
    source: &[Scene],
    target: &[Scene],
) -> Result<Vec<AblationRow>> {
    grid.cells()
        .into_iter()
        .map(|(variant, merge, voting)| {
            let mut c = cfg.clone();
            c.ensemble.enabled = true;
            c.ensemble.variant = variant;
            c.ensemble.merge = merge;
            c.ensemble.voting = voting;
            let out = run(&c, source, target)?;
            let last = out.reports.last().expect("at least one round");
            Ok(AblationRow {
                variant,
                merge,
                voting,
                rounds: last.round,
                tp: last.quality.total_tp(),
                ap_bev: last.quality.mean_ap_bev(),
                ap_3d: last.quality.mean_ap_3d(),
                ase: last.quality.pooled_ase(),
                n_pseudo: last.n_pseudo,
            })
        })
        .collect()
}
