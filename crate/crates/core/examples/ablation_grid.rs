//! Ensemble variant, merge strategy and voting ablation on a small dataset.

use selftrain3d::io::{generate_dataset, RunConfig};
use selftrain3d::pipeline::{run_ablation, AblationGrid};
use selftrain3d::simdet::Domain;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::default();
    let source = generate_dataset(&cfg.data.scene, 40, Domain::Source, 1)?;
    let target = generate_dataset(&cfg.target_spec(), 80, Domain::Target, 1)?;
    let mut pipeline = cfg.pipeline.clone();
    pipeline.rounds = 4;

    let rows = run_ablation(&pipeline, &AblationGrid::default(), &source, &target)?;
    println!("{:<12} {:<5} {:<6} {:>5} {:>7} {:>7}", "variant", "merge", "voting", "tp", "AP3D", "ASE");
    for r in rows {
        println!(
            "{:<12} {:<5} {:<6} {:>5} {:>7.3} {:>7.3}",
            format!("{:?}", r.variant),
            format!("{:?}", r.merge),
            r.voting,
            r.tp,
            r.ap_3d.unwrap_or(0.0),
            r.ase.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
