//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or configuration error (including missing
//! input files), 3 malformed data.
//!
//! Global flags fall back to environment variables: `SELFTRAIN3D_CONFIG`,
//! `SELFTRAIN3D_SEED`, `SELFTRAIN3D_OUT`, `SELFTRAIN3D_JOBS`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::evalkit::{quality_report, IouThresholds};
use crate::io::{
    generate_dataset, quality_rows, read_csv, read_json, read_labels, read_scenes, write_csv,
    write_json, write_jsonl, write_memories, write_run_report, AblationCsvRow, QualityRow,
    RoundRow, RunConfig, RunReport,
};
use crate::memory::{EnsembleVariant, MergeStrategy};
use crate::pipeline::{run_ablation, run_with};
use crate::scoring::ClassId;
use crate::simdet::Domain;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "selftrain3d", version, about = "Denoised pseudo-label self-training on synthetic 3D scenes")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML config; defaults apply when omitted.
    #[arg(long, global = true, env = "SELFTRAIN3D_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides both the dataset and the pipeline seed.
    #[arg(long, global = true, env = "SELFTRAIN3D_SEED")]
    seed: Option<u64>,
    /// Output directory (file for `eval`).
    #[arg(long, global = true, env = "SELFTRAIN3D_OUT")]
    out: Option<PathBuf>,
    /// Validate inputs and print the effective config without running.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "SELFTRAIN3D_JOBS")]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write source and target scene files.
    GenDataset {
        #[arg(long)]
        source_scenes: Option<usize>,
        #[arg(long)]
        target_scenes: Option<usize>,
    },
    /// Run the self-training loop and write reports.
    Run(DataArgs),
    /// Evaluate a label file against ground-truth scenes.
    Eval {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Matching IoU for cars.
        #[arg(long, default_value_t = 0.7)]
        car_iou: f64,
        /// Matching IoU for every other class.
        #[arg(long, default_value_t = 0.5)]
        default_iou: f64,
    },
    /// Run the memory-strategy grid and write a CSV matrix.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated subset of consistency,nms,bipartite.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
        /// Comma-separated subset of max,avg.
        #[arg(long, value_delimiter = ',')]
        merges: Option<Vec<String>>,
        /// Comma-separated subset of on,off.
        #[arg(long, value_delimiter = ',')]
        voting: Option<Vec<String>>,
    },
    /// Summarize a reports directory written by `run`.
    Report {
        /// Reports directory; defaults to --out or the config's output dir.
        dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io { .. } => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.data.seed = s;
        cfg.pipeline.seed = s;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.global.jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli.global, cli.command))
}

fn dispatch(g: &GlobalArgs, command: Command) -> Result<()> {
    match command {
        Command::GenDataset {
            source_scenes,
            target_scenes,
        } => {
            let mut cfg = load_config(g)?;
            if let Some(n) = source_scenes {
                cfg.data.source_scenes = n;
            }
            if let Some(n) = target_scenes {
                cfg.data.target_scenes = n;
            }
            gen_dataset(g, &cfg)
        }
        Command::Run(data) => {
            let cfg = with_data(load_config(g)?, &data);
            run_cmd(g, &cfg)
        }
        Command::Eval {
            preds,
            gt,
            car_iou,
            default_iou,
        } => eval_cmd(g, &preds, &gt, car_iou, default_iou),
        Command::Ablate {
            data,
            variants,
            merges,
            voting,
        } => {
            let mut cfg = with_data(load_config(g)?, &data);
            if let Some(v) = variants {
                cfg.ablate.variants = v.iter().map(|s| parse_variant(s)).collect::<Result<_>>()?;
            }
            if let Some(m) = merges {
                cfg.ablate.merges = m.iter().map(|s| parse_merge(s)).collect::<Result<_>>()?;
            }
            if let Some(v) = voting {
                cfg.ablate.voting = v.iter().map(|s| parse_switch(s)).collect::<Result<_>>()?;
            }
            ablate_cmd(g, &cfg)
        }
        Command::Report { dir } => {
            let dir = match dir.or_else(|| g.out.clone()) {
                Some(d) => d,
                None => load_config(g)?.output.dir,
            };
            report_cmd(&dir)
        }
    }
}

fn with_data(mut cfg: RunConfig, data: &DataArgs) -> RunConfig {
    if let Some(p) = &data.source {
        cfg.data.source_path = p.clone();
    }
    if let Some(p) = &data.target {
        cfg.data.target_path = p.clone();
    }
    cfg
}

fn parse_variant(s: &str) -> Result<EnsembleVariant> {
    match s.trim() {
        "consistency" | "c" => Ok(EnsembleVariant::Consistency),
        "nms" | "n" => Ok(EnsembleVariant::Nms),
        "bipartite" | "b" => Ok(EnsembleVariant::Bipartite),
        other => Err(Error::Config(format!("unknown ensemble variant {other:?}"))),
    }
}

fn parse_merge(s: &str) -> Result<MergeStrategy> {
    match s.trim() {
        "max" => Ok(MergeStrategy::Max),
        "avg" => Ok(MergeStrategy::Avg),
        other => Err(Error::Config(format!("unknown merge strategy {other:?}"))),
    }
}

fn parse_switch(s: &str) -> Result<bool> {
    match s.trim() {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        other => Err(Error::Config(format!("expected on/off, got {other:?}"))),
    }
}

fn out_dir(g: &GlobalArgs, cfg: &RunConfig) -> PathBuf {
    g.out.clone().unwrap_or_else(|| cfg.output.dir.clone())
}

fn gen_dataset(g: &GlobalArgs, cfg: &RunConfig) -> Result<()> {
    cfg.data.scene.validate()?;
    let target_spec = cfg.target_spec();
    target_spec.validate()?;
    let (src_path, tgt_path) = match &g.out {
        Some(d) => (d.join("source.jsonl"), d.join("target.jsonl")),
        None => (cfg.data.source_path.clone(), cfg.data.target_path.clone()),
    };
    if g.dry_run {
        println!(
            "would write {} source scenes to {} and {} target scenes to {}",
            cfg.data.source_scenes,
            src_path.display(),
            cfg.data.target_scenes,
            tgt_path.display()
        );
        return Ok(());
    }
    let src = generate_dataset(&cfg.data.scene, cfg.data.source_scenes, Domain::Source, cfg.data.seed)?;
    let tgt = generate_dataset(&target_spec, cfg.data.target_scenes, Domain::Target, cfg.data.seed)?;
    write_jsonl(&src_path, &src)?;
    write_jsonl(&tgt_path, &tgt)?;
    eprintln!("wrote {} and {}", src_path.display(), tgt_path.display());
    Ok(())
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("dataset file {} not found", p.display())))
    }
}

fn run_cmd(g: &GlobalArgs, cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    require_file(&cfg.data.source_path)?;
    require_file(&cfg.data.target_path)?;
    if g.dry_run {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let source = read_scenes(&cfg.data.source_path)?;
    let target = read_scenes(&cfg.data.target_path)?;
    let dir = out_dir(g, cfg);
    let every = cfg.output.snapshot_every;
    let out = run_with(&cfg.pipeline, &source, &target, |report, state| {
        eprintln!(
            "round {:>3}: {} pseudo labels, {} TPs, AP3D {}",
            report.round,
            report.n_positive,
            report.quality.total_tp(),
            report
                .quality
                .mean_ap_3d()
                .map(|a| format!("{a:.4}"))
                .unwrap_or_else(|| "-".into())
        );
        if every > 0 && report.round % every == 0 {
            write_memories(
                &dir.join("memory").join(format!("round_{:03}.jsonl", report.round)),
                &state.memories,
            )?;
        }
        Ok(())
    })?;
    write_memories(&dir.join("memory").join("final.jsonl"), &out.final_state.memories)?;
    write_run_report(
        &dir,
        &RunReport {
            config: cfg.clone(),
            pretrained: out.pretrained,
            rounds: out.reports,
        },
    )?;
    eprintln!("reports in {}", dir.display());
    Ok(())
}

fn eval_cmd(g: &GlobalArgs, preds: &Path, gt: &Path, car_iou: f64, default_iou: f64) -> Result<()> {
    let mut thr = IouThresholds::uniform(default_iou);
    thr.per_class.insert(ClassId::new("Car"), car_iou);
    thr.validate().map_err(Error::Config)?;
    let labels = read_labels(preds)?;
    let scenes = read_scenes(gt)?;
    if g.dry_run {
        println!("{} label records, {} scenes", labels.len(), scenes.len());
        return Ok(());
    }
    let memories: Vec<_> = labels.into_iter().map(|r| r.into_memory()).collect();
    let report = quality_report(&memories, &scenes, &thr);
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report is plain data")
    );
    if let Some(path) = &g.out {
        write_json(path, &report)?;
    }
    Ok(())
}

fn ablate_cmd(g: &GlobalArgs, cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    require_file(&cfg.data.source_path)?;
    require_file(&cfg.data.target_path)?;
    if g.dry_run {
        println!("{} grid cells", cfg.ablate.cells().len());
        return Ok(());
    }
    let source = read_scenes(&cfg.data.source_path)?;
    let target = read_scenes(&cfg.data.target_path)?;
    let rows = run_ablation(&cfg.pipeline, &cfg.ablate, &source, &target)?;
    let csv: Vec<AblationCsvRow> = rows.iter().map(AblationCsvRow::from).collect();
    let path = out_dir(g, cfg).join("ablation.csv");
    write_csv(&path, &csv)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn report_cmd(dir: &Path) -> Result<()> {
    let report: RunReport = read_json(&dir.join("report.json"))?;
    let rounds: Vec<RoundRow> = read_csv(&dir.join("rounds.csv"))?;
    let quality: Vec<QualityRow> = read_csv(&dir.join("quality.csv"))?;
    let expected: usize = report
        .rounds
        .iter()
        .map(|r| quality_rows(r.round, &r.quality).len())
        .sum();
    if rounds.len() != report.rounds.len() || quality.len() != expected {
        return Err(Error::data(dir, "report.json and the CSV tables disagree"));
    }
    println!(
        "{:>5} {:>8} {:>8} {:>6} {:>8} {:>8} {:>8}",
        "round", "pseudo", "ignored", "tp", "ap_bev", "ap_3d", "ase"
    );
    for r in &rounds {
        println!(
            "{:>5} {:>8} {:>8} {:>6} {:>8} {:>8} {:>8}",
            r.round,
            r.n_positive,
            r.n_ignored,
            r.tp,
            short(&r.ap_bev),
            short(&r.ap_3d),
            short(&r.ase)
        );
    }
    Ok(())
}

fn short(v: &str) -> String {
    v.parse::<f64>()
        .map(|x| format!("{x:.4}"))
        .unwrap_or_else(|_| "-".into())
}
