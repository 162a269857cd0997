//! Domain-specific normalization: each domain keeps its own statistics while
//! sharing the affine parameters.

use ndarray::array;
use selftrain3d::dsnorm::{dsnorm_infer, dsnorm_train, DomainBatch, DsNormState};
use selftrain3d::simdet::Domain;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let source = array![[1.0, 10.0], [2.0, 12.0], [3.0, 14.0], [4.0, 16.0]];
    let target = array![[50.0, -5.0], [60.0, -4.0], [70.0, -3.0], [80.0, -2.0]];
    let mut state = DsNormState::new(2);
    state.gamma[1] = 2.0;
    state.beta[1] = 0.5;

    let mut out = None;
    for _ in 0..20 {
        let (o, next) = dsnorm_train(&DomainBatch { source: source.view(), target: target.view() }, &state)?;
        out = Some(o);
        state = next;
    }
    let out = out.unwrap();
    println!("normalized source\n{:.3}", out.source.unwrap());
    println!("normalized target\n{:.3}", out.target.unwrap());
    for d in [Domain::Source, Domain::Target] {
        let s = state.stats(d).unwrap();
        println!("{} running mean {:.3} var {:.3}", d.as_str(), s.mean, s.var);
    }
    println!("target at inference\n{:.3}", dsnorm_infer(target.view(), &state, Domain::Target)?);
    Ok(())
}
