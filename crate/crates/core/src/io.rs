//! Run configuration, JSONL scene and label files, report tables.
//!
//! Scene files hold one [`Scene`] per line:
//! `{"scene_id": .., "domain": "source"|"target", "points": [[x,y,z], ..],
//! "gt": [{"class": .., "box": [cx,cy,cz,l,w,h,yaw]}, ..]}`.
//!
//! Label files hold one [`LabelRecord`] per line:
//! `{"scene_id": .., "round": k, "labels": [{"class", "box", "score",
//! "state", "cnt"}, ..]}`; `round`, `state` and `cnt` are optional.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::QualityReport;
use crate::memory::SceneMemory;
use crate::pipeline::{scene_rng, AblationGrid, AblationRow, PipelineConfig, RoundReport};
use crate::scoring::{LabelState, PseudoLabelEntry};
use crate::simdet::{generate_scene, Domain, NoiseModel, Scene, SceneSpec};

/// Default configuration with every knob documented.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../configs/default.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source_path: PathBuf,
    pub target_path: PathBuf,
    /// Seed for dataset generation.
    pub seed: u64,
    pub source_scenes: usize,
    pub target_scenes: usize,
    /// Source-domain scene layout; target objects are this divided by the
    /// pipeline's size gap.
    pub scene: SceneSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source_path: "data/source.jsonl".into(),
            target_path: "data/target.jsonl".into(),
            seed: 0,
            source_scenes: 100,
            target_scenes: 500,
            scene: SceneSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write a memory snapshot every this many rounds; 0 writes only the
    /// final memory.
    pub snapshot_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "reports".into(),
            snapshot_every: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub pipeline: PipelineConfig,
    pub output: OutputConfig,
    pub ablate: AblationGrid,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(base) = path.parent() {
            for p in [
                &mut cfg.data.source_path,
                &mut cfg.data.target_path,
                &mut cfg.output.dir,
            ] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is plain data")
    }

    pub fn validate(&self) -> Result<()> {
        self.data.scene.validate()?;
        self.pipeline.validate()
    }

    pub fn target_spec(&self) -> SceneSpec {
        self.data.scene.shrunk_by(self.pipeline.size_gap)
    }
}

fn scene_id(domain: Domain, i: usize) -> String {
    format!("{}-{i:06}", domain.as_str())
}

/// Deterministic scenes for one domain; scene `i` depends only on the seed
/// and its id.
pub fn generate_dataset(spec: &SceneSpec, n: usize, domain: Domain, seed: u64) -> Result<Vec<Scene>> {
    spec.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let id = scene_id(domain, i);
            let mut rng = scene_rng(seed, &id, 0, 0);
            Ok(generate_scene(&mut rng, spec, &id, domain)?)
        })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes one JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::data(path, e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads one JSON document per non-blank line.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::data(path, format!("line {}: {e}", n + 1)))?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_scenes(path: &Path) -> Result<Vec<Scene>> {
    read_jsonl(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRecord {
    pub scene_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    pub labels: Vec<PseudoLabelEntry>,
}

impl From<&SceneMemory> for LabelRecord {
    fn from(m: &SceneMemory) -> Self {
        Self {
            scene_id: m.scene_id.clone(),
            round: Some(m.round),
            labels: m.entries.clone(),
        }
    }
}

impl From<&Scene> for LabelRecord {
    /// Ground truth as positive labels with score 1.
    fn from(s: &Scene) -> Self {
        Self {
            scene_id: s.scene_id.clone(),
            round: None,
            labels: s
                .gt
                .iter()
                .map(|g| PseudoLabelEntry {
                    bbox: g.bbox,
                    class_id: g.class_id.clone(),
                    score: 1.0,
                    state: LabelState::Positive,
                    cnt: 0,
                })
                .collect(),
        }
    }
}

impl LabelRecord {
    pub fn into_memory(self) -> SceneMemory {
        SceneMemory {
            scene_id: self.scene_id,
            round: self.round.unwrap_or(0),
            entries: self.labels,
        }
    }
}

/// Reads label records; scene records on a line are accepted and turned
/// into labels from their ground truth.
pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>> {
    let values: Vec<serde_json::Value> = read_jsonl(path)?;
    values
        .into_iter()
        .enumerate()
        .map(|(n, v)| {
            let err = |e: serde_json::Error| Error::data(path, format!("record {}: {e}", n + 1));
            if v.get("labels").is_some() {
                serde_json::from_value(v).map_err(err)
            } else {
                let s: Scene = serde_json::from_value(v).map_err(err)?;
                Ok(LabelRecord::from(&s))
            }
        })
        .collect()
}

pub fn write_memories(path: &Path, memories: &[SceneMemory]) -> Result<()> {
    let records: Vec<LabelRecord> = memories.iter().map(LabelRecord::from).collect();
    write_jsonl(path, &records)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct QualityRow {
    pub round: usize,
    pub class: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ap_bev: String,
    pub ap_3d: String,
    pub ate: String,
    pub ase: String,
    pub aoe: String,
}

pub fn quality_rows(round: usize, q: &QualityReport) -> Vec<QualityRow> {
    q.classes
        .iter()
        .map(|(class, c)| QualityRow {
            round,
            class: class.to_string(),
            tp: c.tp_count,
            fp: c.fp_count,
            fn_: c.fn_count,
            ap_bev: fmt_opt(c.ap_bev),
            ap_3d: fmt_opt(c.ap_3d),
            ate: fmt_opt(c.ate),
            ase: fmt_opt(c.ase),
            aoe: fmt_opt(c.aoe),
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct RoundRow {
    pub round: usize,
    pub stage: String,
    pub n_proxies: usize,
    pub n_pseudo: usize,
    pub n_positive: usize,
    pub n_ignored: usize,
    pub merged: usize,
    pub cached: usize,
    pub ignored: usize,
    pub discarded: usize,
    pub churn: f64,
    pub tp: usize,
    pub ap_bev: String,
    pub ap_3d: String,
    pub ase: String,
    pub loss_source: f64,
    pub loss_target: f64,
    pub loss_overall: f64,
}

impl From<&RoundReport> for RoundRow {
    fn from(r: &RoundReport) -> Self {
        Self {
            round: r.round,
            stage: r.stage.map(|s| s.to_string()).unwrap_or_default(),
            n_proxies: r.n_proxies,
            n_pseudo: r.n_pseudo,
            n_positive: r.n_positive,
            n_ignored: r.n_ignored,
            merged: r.fates.merged,
            cached: r.fates.cached,
            ignored: r.fates.ignored,
            discarded: r.fates.discarded,
            churn: r.churn,
            tp: r.quality.total_tp(),
            ap_bev: fmt_opt(r.quality.mean_ap_bev()),
            ap_3d: fmt_opt(r.quality.mean_ap_3d()),
            ase: fmt_opt(r.quality.pooled_ase()),
            loss_source: r.losses.source_total,
            loss_target: r.losses.target_total,
            loss_overall: r.losses.overall,
        }
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct AblationCsvRow {
    pub variant: String,
    pub merge: String,
    pub voting: bool,
    pub rounds: usize,
    pub tp: usize,
    pub ap_bev: String,
    pub ap_3d: String,
    pub ase: String,
    pub n_pseudo: usize,
}

fn enum_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

impl From<&AblationRow> for AblationCsvRow {
    fn from(r: &AblationRow) -> Self {
        Self {
            variant: enum_name(&r.variant),
            merge: enum_name(&r.merge),
            voting: r.voting,
            rounds: r.rounds,
            tp: r.tp,
            ap_bev: fmt_opt(r.ap_bev),
            ap_3d: fmt_opt(r.ap_3d),
            ase: fmt_opt(r.ase),
            n_pseudo: r.n_pseudo,
        }
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let w = create(path)?;
    let mut csv = csv::Writer::from_writer(w);
    for r in rows {
        csv.serialize(r).map_err(|e| Error::data(path, e.to_string()))?;
    }
    csv.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::data(path, format!("{other:?}")),
    })?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::data(path, e.to_string())))
        .collect()
}

/// Everything a run writes to `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub pretrained: NoiseModel,
    pub rounds: Vec<RoundReport>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::data(path, e.to_string()))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::data(path, e.to_string()))
}

/// Writes `report.json`, `rounds.csv` and `quality.csv` into `dir`.
pub fn write_run_report(dir: &Path, report: &RunReport) -> Result<()> {
    write_json(&dir.join("report.json"), report)?;
    let rounds: Vec<RoundRow> = report.rounds.iter().map(RoundRow::from).collect();
    write_csv(&dir.join("rounds.csv"), &rounds)?;
    let quality: Vec<QualityRow> = report
        .rounds
        .iter()
        .flat_map(|r| quality_rows(r.round, &r.quality))
        .collect();
    write_csv(&dir.join("quality.csv"), &quality)
}
