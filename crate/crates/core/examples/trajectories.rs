//! Follows tracer trajectories through a short engine run and rebuilds the
//! wavefunction along them from the accumulated integrals.
//!
//!     cargo run --release --example trajectories -- [uncoupled|coupled] [t_final]

use qhydro::config::RunConfig;
use qhydro::hydrodynamics::{run, synthesize_wavefunction, Collector};
use qhydro::model::Case;

fn main() -> qhydro::Result<()> {
    let mut args = std::env::args().skip(1);
    let case: Case = args.next().as_deref().unwrap_or("uncoupled").parse()?;
    let mut cfg = RunConfig::for_case(case);
    cfg.hydro.t_final = args
        .next()
        .map(|s| s.parse().expect("t_final must be a number"))
        .unwrap_or(100.0);
    cfg.output.trajectories = 8;

    let mut sink = Collector::default();
    let summary = run(&cfg, &mut sink)?;
    println!("{summary:?}");

    let last = summary.final_time;
    println!("     id        x0        y0   ->        x         y        rho          Q         Lq");
    for t in &sink.final_tracers {
        let r = sink
            .trajectories
            .iter()
            .rev()
            .find(|r| r.id == t.id() && r.time == last)
            .expect("final record");
        println!(
            "{:7} {:9.4} {:9.4}   -> {:9.4} {:9.4} {:10.3e} {:10.3e} {:10.3e}",
            t.id(),
            t.origin[0],
            t.origin[1],
            r.position[0],
            r.position[1],
            r.rho,
            r.q,
            r.lq
        );
    }

    let worst = sink
        .final_tracers
        .iter()
        .map(|t| {
            let psi = synthesize_wavefunction(t.psi0, &[t.segment(last)], cfg.physical.hbar).expect("one segment");
            (psi.norm_sqr() / t.element.density() - 1.0).abs()
        })
        .fold(0.0f64, f64::max);
    println!("synthesized |psi|^2 vs carried rho: worst relative gap {worst:.1e}");
    Ok(())
}
