//! The full self-training loop on generated data, printing pseudo-label
//! quality per round.

use selftrain3d::io::{generate_dataset, RunConfig};
use selftrain3d::pipeline::run;
use selftrain3d::simdet::Domain;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::default();
    let source = generate_dataset(&cfg.data.scene, 60, Domain::Source, cfg.pipeline.seed)?;
    let target = generate_dataset(&cfg.target_spec(), 120, Domain::Target, cfg.pipeline.seed)?;
    let mut pipeline = cfg.pipeline.clone();
    pipeline.rounds = 6;

    for (name, p) in [("full", pipeline.clone()), ("naive", pipeline.naive())] {
        let out = run(&p, &source, &target)?;
        println!("{name}");
        for r in &out.reports {
            println!(
                "  round {} stage {:?}: {} positive, {} ignored, tp {}, AP3D {:.3}, churn {:.3}",
                r.round,
                r.stage,
                r.n_positive,
                r.n_ignored,
                r.quality.total_tp(),
                r.quality.mean_ap_3d().unwrap_or(0.0),
                r.churn
            );
        }
    }
    Ok(())
}
