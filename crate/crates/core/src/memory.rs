//! Per-scene pseudo-label memory: ensemble of historical and fresh labels
//! followed by unmatched-counter voting.
//!
//! Every round the fresh proxy labels of a scene are matched class by class
//! against the stored labels. Matched pairs collapse to the higher-scoring
//! box with its counter reset. Unmatched fresh boxes start at counter 0;
//! unmatched stored boxes increment their counter and are cached, forced to
//! ignored, or discarded as the counter crosses `t_ign` and `t_rm`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assignment::min_cost_assignment;
use crate::error::MemoryError;
use crate::geom::{iou, nms_indices_mode, IouMode, OrientedBox};
use crate::scoring::{ClassId, LabelState, PseudoLabelEntry};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleVariant {
    #[default]
    Consistency,
    Nms,
    Bipartite,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeStrategy {
    /// Keep the higher-scoring entry of a matched pair.
    #[default]
    Max,
    /// Score-weighted parameter average. Only for ablations: averaging
    /// headings that disagree produces boxes matching neither input.
    Avg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    /// When false the memory is replaced by each round's proxy labels.
    pub enabled: bool,
    pub variant: EnsembleVariant,
    pub merge: MergeStrategy,
    /// When false unmatched proxies are cached and unmatched memory dropped.
    pub voting: bool,
    pub match_iou_min: f64,
    pub t_ign: u32,
    pub t_rm: u32,
    pub iou_mode: IouMode,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            variant: EnsembleVariant::Consistency,
            merge: MergeStrategy::Max,
            voting: true,
            match_iou_min: 0.1,
            t_ign: 2,
            t_rm: 3,
            iou_mode: IouMode::Iou3d,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), MemoryError> {
        if !(self.match_iou_min > 0.0 && self.match_iou_min < 1.0) {
            return Err(MemoryError::InvalidConfig(format!(
                "match_iou_min must lie in (0, 1), got {}",
                self.match_iou_min
            )));
        }
        if !(0 < self.t_ign && self.t_ign < self.t_rm) {
            return Err(MemoryError::InvalidConfig(format!(
                "need 0 < t_ign < t_rm, got t_ign={} t_rm={}",
                self.t_ign, self.t_rm
            )));
        }
        Ok(())
    }
}

/// Stored pseudo labels of one scene after `round` updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneMemory {
    pub scene_id: String,
    pub round: u32,
    pub entries: Vec<PseudoLabelEntry>,
}

impl SceneMemory {
    pub fn new(scene_id: impl Into<String>) -> Self {
        Self {
            scene_id: scene_id.into(),
            round: 0,
            entries: Vec::new(),
        }
    }

    pub fn positives(&self) -> impl Iterator<Item = &PseudoLabelEntry> {
        self.entries.iter().filter(|e| e.state == LabelState::Positive)
    }
}

/// Fresh proxy labels of one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxyBatch {
    pub scene_id: String,
    pub labels: Vec<PseudoLabelEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedPair {
    pub memory: usize,
    pub proxy: usize,
    pub iou: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Matching {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_memory: Vec<usize>,
    pub unmatched_proxy: Vec<usize>,
}

impl Matching {
    pub fn total_iou(&self) -> f64 {
        self.pairs.iter().map(|p| p.iou).sum()
    }

    fn from_pairs(pairs: Vec<MatchedPair>, n_memory: usize, n_proxy: usize) -> Self {
        let mut mem_used = vec![false; n_memory];
        let mut prox_used = vec![false; n_proxy];
        for p in &pairs {
            mem_used[p.memory] = true;
            prox_used[p.proxy] = true;
        }
        let unused = |v: Vec<bool>| v.iter().enumerate().filter(|(_, u)| !**u).map(|(i, _)| i).collect();
        Matching {
            pairs,
            unmatched_memory: unused(mem_used),
            unmatched_proxy: unused(prox_used),
        }
    }
}

/// Row-major `memory × proxy` IoU matrix.
pub fn iou_matrix(memory: &[OrientedBox], proxies: &[OrientedBox], mode: IouMode) -> Vec<f64> {
    memory
        .iter()
        .flat_map(|m| proxies.iter().map(move |p| iou(m, p, mode)))
        .collect()
}

/// Each memory box claims its highest-IoU proxy. Claims below `min_iou` are
/// dropped; a proxy claimed twice goes to the higher IoU, the lower row
/// stays unmatched. Ties prefer the lower index.
pub fn match_consistency(
    memory: &[OrientedBox],
    proxies: &[OrientedBox],
    min_iou: f64,
    mode: IouMode,
) -> Matching {
    let n = proxies.len();
    let a = iou_matrix(memory, proxies, mode);
    let mut best_claim: Vec<Option<MatchedPair>> = vec![None; n];
    for j in 0..memory.len() {
        let row = &a[j * n..(j + 1) * n];
        let Some((v, &best)) = row
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, &f64)>, (v, x)| match acc {
                Some((_, b)) if *x <= *b => acc,
                _ => Some((v, x)),
            })
        else {
            continue;
        };
        if best < min_iou {
            continue;
        }
        let claim = MatchedPair {
            memory: j,
            proxy: v,
            iou: best,
        };
        match best_claim[v] {
            Some(prev) if prev.iou >= best => {}
            _ => best_claim[v] = Some(claim),
        }
    }
    let mut pairs: Vec<MatchedPair> = best_claim.into_iter().flatten().collect();
    pairs.sort_by_key(|p| p.memory);
    Matching::from_pairs(pairs, memory.len(), n)
}

/// Assignment maximizing total IoU; assigned pairs below `min_iou` are
/// demoted to unmatched.
pub fn match_bipartite(
    memory: &[OrientedBox],
    proxies: &[OrientedBox],
    min_iou: f64,
    mode: IouMode,
) -> Matching {
    let a = iou_matrix(memory, proxies, mode);
    let cost: Vec<f64> = a.iter().map(|x| -x).collect();
    let assign = min_cost_assignment(&cost, memory.len(), proxies.len());
    let pairs = assign
        .iter()
        .enumerate()
        .filter_map(|(j, v)| {
            let v = (*v)?;
            let iou = a[j * proxies.len() + v];
            (iou >= min_iou).then_some(MatchedPair {
                memory: j,
                proxy: v,
                iou,
            })
        })
        .collect();
    Matching::from_pairs(pairs, memory.len(), proxies.len())
}

/// Collapses a matched pair into one entry with its counter reset.
///
/// With [`MergeStrategy::Max`] the proxy wins ties.
pub fn merge_matched(
    memory: &PseudoLabelEntry,
    proxy: &PseudoLabelEntry,
    strategy: MergeStrategy,
) -> PseudoLabelEntry {
    let winner = if memory.score <= proxy.score {
        proxy
    } else {
        memory
    };
    let mut out = winner.clone();
    out.cnt = 0;
    if strategy == MergeStrategy::Avg {
        let total = memory.score + proxy.score;
        let (wm, wp) = if total > 0.0 {
            (memory.score / total, proxy.score / total)
        } else {
            (0.5, 0.5)
        };
        let (a, b) = (memory.bbox.to_array(), proxy.bbox.to_array());
        let mut avg = [0.0; 7];
        for k in 0..7 {
            avg[k] = wm * a[k] + wp * b[k];
        }
        out.bbox = OrientedBox {
            cx: avg[0],
            cy: avg[1],
            cz: avg[2],
            l: avg[3],
            w: avg[4],
            h: avg[5],
            yaw: 0.0,
        }
        .with_yaw(avg[6]);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fate {
    Merged,
    Cached,
    Ignored,
    Discarded,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VoteResult {
    pub cached: Vec<PseudoLabelEntry>,
    pub ignored: Vec<PseudoLabelEntry>,
    pub discarded: Vec<PseudoLabelEntry>,
}

/// Unmatched-counter voting.
///
/// Fresh entries get counter 0; stored entries get counter + 1. Then
/// `cnt ≥ t_rm` discards, `t_ign ≤ cnt < t_rm` keeps the entry as ignored,
/// and anything lower is cached unchanged.
pub fn memory_vote(
    unmatched_memory: Vec<PseudoLabelEntry>,
    unmatched_proxy: Vec<PseudoLabelEntry>,
    cfg: &EnsembleConfig,
) -> VoteResult {
    let mut out = VoteResult::default();
    let bumped = unmatched_memory.into_iter().map(|mut e| {
        e.cnt += 1;
        e
    });
    let fresh = unmatched_proxy.into_iter().map(|mut e| {
        e.cnt = 0;
        e
    });
    for mut e in bumped.chain(fresh) {
        match vote(e.cnt, cfg) {
            Fate::Discarded => out.discarded.push(e),
            Fate::Ignored => {
                e.state = LabelState::Ignored;
                out.ignored.push(e);
            }
            _ => out.cached.push(e),
        }
    }
    out
}

fn vote(cnt: u32, cfg: &EnsembleConfig) -> Fate {
    if cnt >= cfg.t_rm {
        Fate::Discarded
    } else if cnt >= cfg.t_ign {
        Fate::Ignored
    } else {
        Fate::Cached
    }
}

/// Result of one memory update together with the fate of every input.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryUpdate {
    pub memory: SceneMemory,
    /// Indexed like the previous memory's entries.
    pub memory_fates: Vec<Fate>,
    /// Indexed like the proxy labels.
    pub proxy_fates: Vec<Fate>,
}

impl MemoryUpdate {
    pub fn count(&self, fate: Fate) -> usize {
        self.memory_fates
            .iter()
            .chain(&self.proxy_fates)
            .filter(|f| **f == fate)
            .count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Origin {
    Memory(usize),
    Proxy(usize),
}

struct Candidate {
    entry: PseudoLabelEntry,
    origins: Vec<Origin>,
}

struct Ledger {
    memory: Vec<Option<Fate>>,
    proxy: Vec<Option<Fate>>,
}

impl Ledger {
    fn set(&mut self, o: Origin, f: Fate) {
        match o {
            Origin::Memory(i) => self.memory[i] = Some(f),
            Origin::Proxy(i) => self.proxy[i] = Some(f),
        }
    }
}

fn group_by_class(entries: &[PseudoLabelEntry]) -> BTreeMap<&ClassId, Vec<usize>> {
    let mut m: BTreeMap<&ClassId, Vec<usize>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        m.entry(&e.class_id).or_default().push(i);
    }
    m
}

fn vote_into(
    mem_idx: Vec<usize>,
    prox_idx: Vec<usize>,
    memory: &[PseudoLabelEntry],
    proxies: &[PseudoLabelEntry],
    cfg: &EnsembleConfig,
    ledger: &mut Ledger,
    out: &mut Vec<Candidate>,
) {
    // Proxies first: the stable NMS then keeps the fresh box on score ties,
    // as the max merge does.
    let origins: Vec<Origin> = prox_idx
        .iter()
        .map(|&i| Origin::Proxy(i))
        .chain(mem_idx.iter().map(|&i| Origin::Memory(i)))
        .collect();
    if !cfg.voting {
        for o in origins {
            match o {
                Origin::Memory(_) => ledger.set(o, Fate::Discarded),
                Origin::Proxy(i) => {
                    ledger.set(o, Fate::Cached);
                    let mut e = proxies[i].clone();
                    e.cnt = 0;
                    out.push(Candidate {
                        entry: e,
                        origins: vec![o],
                    });
                }
            }
        }
        return;
    }
    let um = mem_idx.iter().map(|&i| memory[i].clone()).collect();
    let up = prox_idx.iter().map(|&i| proxies[i].clone()).collect();
    let voted = memory_vote(um, up, cfg);
    // memory_vote preserves input order within each bucket; recover origins.
    let mut buckets = [voted.cached.into_iter(), voted.ignored.into_iter(), voted.discarded.into_iter()];
    for o in origins {
        let cnt = match o {
            Origin::Memory(i) => memory[i].cnt + 1,
            Origin::Proxy(_) => 0,
        };
        let fate = vote(cnt, cfg);
        let bucket = match fate {
            Fate::Cached => 0,
            Fate::Ignored => 1,
            _ => 2,
        };
        let entry = buckets[bucket].next().expect("one voted entry per input");
        ledger.set(o, fate);
        if fate != Fate::Discarded {
            out.push(Candidate {
                entry,
                origins: vec![o],
            });
        }
    }
}

fn ensemble_class_matched(
    mem_idx: &[usize],
    prox_idx: &[usize],
    memory: &[PseudoLabelEntry],
    proxies: &[PseudoLabelEntry],
    cfg: &EnsembleConfig,
    ledger: &mut Ledger,
    out: &mut Vec<Candidate>,
) {
    let mb: Vec<OrientedBox> = mem_idx.iter().map(|&i| memory[i].bbox).collect();
    let pb: Vec<OrientedBox> = prox_idx.iter().map(|&i| proxies[i].bbox).collect();
    let m = match cfg.variant {
        EnsembleVariant::Bipartite => match_bipartite(&mb, &pb, cfg.match_iou_min, cfg.iou_mode),
        _ => match_consistency(&mb, &pb, cfg.match_iou_min, cfg.iou_mode),
    };
    for p in &m.pairs {
        let (mi, pi) = (mem_idx[p.memory], prox_idx[p.proxy]);
        let merged = merge_matched(&memory[mi], &proxies[pi], cfg.merge);
        let origins = vec![Origin::Memory(mi), Origin::Proxy(pi)];
        for o in &origins {
            ledger.set(*o, Fate::Merged);
        }
        out.push(Candidate {
            entry: merged,
            origins,
        });
    }
    vote_into(
        m.unmatched_memory.iter().map(|&j| mem_idx[j]).collect(),
        m.unmatched_proxy.iter().map(|&v| prox_idx[v]).collect(),
        memory,
        proxies,
        cfg,
        ledger,
        out,
    );
}

fn ensemble_class_nms(
    mem_idx: &[usize],
    prox_idx: &[usize],
    memory: &[PseudoLabelEntry],
    proxies: &[PseudoLabelEntry],
    cfg: &EnsembleConfig,
    ledger: &mut Ledger,
    out: &mut Vec<Candidate>,
) {
    // Proxies first: the stable NMS then keeps the fresh box on score ties,
    // as the max merge does.
    let origins: Vec<Origin> = prox_idx
        .iter()
        .map(|&i| Origin::Proxy(i))
        .chain(mem_idx.iter().map(|&i| Origin::Memory(i)))
        .collect();
    let entry = |o: Origin| match o {
        Origin::Memory(i) => &memory[i],
        Origin::Proxy(i) => &proxies[i],
    };
    let boxes: Vec<OrientedBox> = origins.iter().map(|o| entry(*o).bbox).collect();
    let scores: Vec<f64> = origins.iter().map(|o| entry(*o).score).collect();
    let keep = nms_indices_mode(&boxes, &scores, cfg.match_iou_min, cfg.iou_mode);
    let mut kept = vec![false; origins.len()];
    for &k in &keep {
        kept[k] = true;
    }

    let n_prox = prox_idx.len();
    let overlaps_other_side = |k: usize| {
        let range = if k < n_prox { n_prox..origins.len() } else { 0..n_prox };
        range
            .into_iter()
            .any(|o| iou(&boxes[k], &boxes[o], cfg.iou_mode) > cfg.match_iou_min)
    };

    let mut lone_mem = Vec::new();
    let mut lone_prox = Vec::new();
    for (k, &o) in origins.iter().enumerate() {
        if !kept[k] {
            ledger.set(o, Fate::Merged);
            continue;
        }
        if overlaps_other_side(k) {
            ledger.set(o, Fate::Merged);
            let mut e = entry(o).clone();
            e.cnt = 0;
            out.push(Candidate {
                entry: e,
                origins: vec![o],
            });
        } else {
            match o {
                Origin::Memory(i) => lone_mem.push(i),
                Origin::Proxy(i) => lone_prox.push(i),
            }
        }
    }
    vote_into(lone_mem, lone_prox, memory, proxies, cfg, ledger, out);
}

/// NMS-variant ensemble of a memory with fresh proxies, without the scene
/// check or round bookkeeping of [`update_memory`].
pub fn ensemble_nms(
    memory: &SceneMemory,
    proxies: &[PseudoLabelEntry],
    cfg: &EnsembleConfig,
) -> SceneMemory {
    let cfg = EnsembleConfig {
        variant: EnsembleVariant::Nms,
        ..cfg.clone()
    };
    let batch = ProxyBatch {
        scene_id: memory.scene_id.clone(),
        labels: proxies.to_vec(),
    };
    update_memory(memory, &batch, &cfg)
        .expect("scene ids agree by construction")
        .memory
}

/// One memory ensemble-and-voting step for a scene.
///
/// The result holds the new memory (round + 1) and the fate of every input
/// entry. A final class-wise NMS at `match_iou_min` keeps stored boxes from
/// overlapping; entries removed there count as discarded.
pub fn update_memory(
    memory: &SceneMemory,
    batch: &ProxyBatch,
    cfg: &EnsembleConfig,
) -> Result<MemoryUpdate, MemoryError> {
    if memory.scene_id != batch.scene_id {
        return Err(MemoryError::SceneMismatch {
            memory: memory.scene_id.clone(),
            proxies: batch.scene_id.clone(),
        });
    }
    let mem = &memory.entries;
    let prox = &batch.labels;
    let mut ledger = Ledger {
        memory: vec![None; mem.len()],
        proxy: vec![None; prox.len()],
    };
    let mut cands: Vec<Candidate> = Vec::with_capacity(mem.len() + prox.len());

    if !cfg.enabled {
        for i in 0..mem.len() {
            ledger.set(Origin::Memory(i), Fate::Discarded);
        }
        for (i, e) in prox.iter().enumerate() {
            ledger.set(Origin::Proxy(i), Fate::Cached);
            let mut e = e.clone();
            e.cnt = 0;
            cands.push(Candidate {
                entry: e,
                origins: vec![Origin::Proxy(i)],
            });
        }
    } else {
        let mem_groups = group_by_class(mem);
        let prox_groups = group_by_class(prox);
        let mut classes: Vec<&ClassId> = mem_groups.keys().chain(prox_groups.keys()).copied().collect();
        classes.sort();
        classes.dedup();
        let empty = Vec::new();
        for c in classes {
            let mi = mem_groups.get(c).unwrap_or(&empty);
            let pi = prox_groups.get(c).unwrap_or(&empty);
            match cfg.variant {
                EnsembleVariant::Nms => {
                    ensemble_class_nms(mi, pi, mem, prox, cfg, &mut ledger, &mut cands)
                }
                _ => ensemble_class_matched(mi, pi, mem, prox, cfg, &mut ledger, &mut cands),
            }
        }
    }

    let survivors = dedup(cands, cfg, &mut ledger);
    let memory_fates = ledger.memory.into_iter().map(|f| f.expect("every memory entry decided")).collect();
    let proxy_fates = ledger.proxy.into_iter().map(|f| f.expect("every proxy entry decided")).collect();
    Ok(MemoryUpdate {
        memory: SceneMemory {
            scene_id: memory.scene_id.clone(),
            round: memory.round + 1,
            entries: survivors,
        },
        memory_fates,
        proxy_fates,
    })
}

fn dedup(cands: Vec<Candidate>, cfg: &EnsembleConfig, ledger: &mut Ledger) -> Vec<PseudoLabelEntry> {
    let mut by_class: BTreeMap<ClassId, Vec<Candidate>> = BTreeMap::new();
    for c in cands {
        by_class.entry(c.entry.class_id.clone()).or_default().push(c);
    }
    let mut out = Vec::new();
    for (_, group) in by_class {
        let boxes: Vec<OrientedBox> = group.iter().map(|c| c.entry.bbox).collect();
        let scores: Vec<f64> = group.iter().map(|c| c.entry.score).collect();
        let keep = nms_indices_mode(&boxes, &scores, cfg.match_iou_min, cfg.iou_mode);
        let mut kept = vec![false; group.len()];
        for &k in &keep {
            kept[k] = true;
        }
        for (k, c) in group.iter().enumerate() {
            if !kept[k] {
                for o in &c.origins {
                    ledger.set(*o, Fate::Discarded);
                }
            }
        }
        let mut group: Vec<Option<Candidate>> = group.into_iter().map(Some).collect();
        out.extend(keep.into_iter().map(|k| group[k].take().expect("kept once").entry));
    }
    out
}
