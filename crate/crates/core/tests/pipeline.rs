use selftrain3d::io::{generate_dataset, RunConfig};
use selftrain3d::pipeline::{run, run_ablation, run_round, AblationGrid, PipelineConfig, PipelineState};
use selftrain3d::simdet::{Domain, Scene};

fn small(n_target: usize) -> (PipelineConfig, Vec<Scene>, Vec<Scene>) {
    let cfg = RunConfig::default();
    let src = generate_dataset(&cfg.data.scene, 30, Domain::Source, 3).unwrap();
    let tgt = generate_dataset(&cfg.target_spec(), n_target, Domain::Target, 3).unwrap();
    let mut p = cfg.pipeline;
    p.rounds = 4;
    (p, src, tgt)
}

#[test]
fn identical_inputs_give_identical_reports() {
    let (cfg, src, tgt) = small(40);
    let a = run(&cfg, &src, &tgt).unwrap();
    let b = run(&cfg, &src, &tgt).unwrap();
    assert_eq!(a, b);
    let mut other = cfg.clone();
    other.seed += 1;
    let c = run(&other, &src, &tgt).unwrap();
    assert_ne!(a.reports, c.reports);
}

#[test]
fn scene_order_does_not_matter() {
    let (cfg, src, tgt) = small(30);
    let mut shuffled = tgt.clone();
    shuffled.reverse();
    shuffled.rotate_left(7);
    assert_eq!(run(&cfg, &src, &tgt).unwrap().reports, run(&cfg, &src, &shuffled).unwrap().reports);
}

#[test]
fn thread_count_does_not_matter() {
    let (cfg, src, tgt) = small(30);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| run(&cfg, &src, &tgt).unwrap());
    let b = three.install(|| run(&cfg, &src, &tgt).unwrap());
    assert_eq!(a, b);
}

#[test]
fn memory_rounds_follow_the_pipeline() {
    let (cfg, src, tgt) = small(20);
    let mut state = PipelineState::new(&cfg, &src, &tgt);
    let mut sorted = tgt.clone();
    sorted.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    for k in 1..=cfg.rounds {
        let (next, report) = run_round(&cfg, &state, k, &src, &sorted).unwrap();
        assert_eq!(report.round, k);
        assert_eq!(next.round, k);
        assert!(next.memories.iter().all(|m| m.round as usize == k));
        state = next;
    }
}

#[test]
fn refresh_interval_skips_detection_but_keeps_counters() {
    let (mut cfg, src, tgt) = small(20);
    cfg.refresh_interval = 2;
    let out = run(&cfg, &src, &tgt).unwrap();
    let refreshed: Vec<bool> = out.reports.iter().map(|r| r.refreshed).collect();
    assert_eq!(refreshed, vec![true, false, true, false]);
    for r in out.reports.iter().filter(|r| !r.refreshed) {
        assert_eq!(r.n_proxies, 0);
    }
    assert!(out.final_state.memories.iter().all(|m| m.round == 4));
}

#[test]
fn naive_mode_is_pure_config() {
    let (cfg, src, tgt) = small(30);
    let naive = cfg.clone().naive();
    assert!(!naive.scoring.triplet && !naive.ensemble.enabled && !naive.ros.enabled && !naive.cda.enabled);
    let text = toml::to_string(&naive).unwrap();
    let back: PipelineConfig = toml::from_str(&text).unwrap();
    assert_eq!(back, naive);
    let out = run(&naive, &src, &tgt).unwrap();
    for r in &out.reports {
        assert_eq!(r.n_ignored, 0);
        assert_eq!(r.fates.ignored, 0);
    }
}

#[test]
fn early_stop_on_low_churn() {
    let (mut cfg, src, tgt) = small(20);
    cfg.rounds = 10;
    cfg.early_stop_churn = 0.99;
    let out = run(&cfg, &src, &tgt).unwrap();
    let n = out.reports.len();
    assert!(n < 10);
    assert!(out.reports[n - 1].churn < 0.99);
    assert!(out.reports[1..n - 1].iter().all(|r| r.churn >= 0.99));
}

#[test]
fn invalid_config_is_rejected() {
    let (mut cfg, src, tgt) = small(5);
    cfg.rounds = 0;
    assert!(run(&cfg, &src, &tgt).is_err());
    let (mut cfg, _, _) = small(5);
    cfg.ensemble.t_ign = 5;
    assert!(run(&cfg, &src, &tgt).is_err());
}

#[test]
fn duplicate_scene_ids_are_rejected() {
    let (cfg, src, mut tgt) = small(5);
    tgt.push(tgt[0].clone());
    assert!(run(&cfg, &src, &tgt).is_err());
}

#[test]
fn ablation_grid_has_twelve_cells() {
    let (mut cfg, src, tgt) = small(15);
    cfg.rounds = 2;
    let grid = AblationGrid::default();
    assert_eq!(grid.cells().len(), 12);
    let rows = run_ablation(&cfg, &grid, &src, &tgt).unwrap();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.rounds == 2));
}

#[test]
fn full_stack_beats_naive_on_small_data() {
    let (mut cfg, src, tgt) = small(120);
    cfg.rounds = 5;
    let full = run(&cfg, &src, &tgt).unwrap();
    let naive = run(&cfg.clone().naive(), &src, &tgt).unwrap();
    let (f, n) = (full.reports.last().unwrap(), naive.reports.last().unwrap());
    assert!(f.quality.total_tp() > n.quality.total_tp());
}
