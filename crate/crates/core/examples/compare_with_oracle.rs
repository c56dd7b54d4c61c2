//! Runs the trajectory engine and the split-operator reference for one case
//! and prints the density errors at the final time.
//!
//!     cargo run --release --example compare_with_oracle -- [uncoupled|coupled] [t_final]

use std::time::Instant;

use qhydro::config::RunConfig;
use qhydro::hydrodynamics::{run, Collector};
use qhydro::model::Case;
use qhydro::oracle::{compare_snapshots, oracle_fields, oracle_init, propagate, SplitOperator};

fn main() -> qhydro::Result<()> {
    let mut args = std::env::args().skip(1);
    let case: Case = args.next().as_deref().unwrap_or("uncoupled").parse()?;
    let mut cfg = RunConfig::for_case(case);
    if let Some(t) = args.next() {
        cfg.hydro.t_final = t.parse().expect("t_final must be a number");
    }
    cfg.output.snapshot_stride = usize::MAX;

    let start = Instant::now();
    let mut sink = Collector::default();
    let summary = run(&cfg, &mut sink)?;
    println!("engine: {summary:?} in {:.1?}", start.elapsed());
    let qtm = sink.snapshots.last().expect("final snapshot");

    let start = Instant::now();
    let grid = cfg.oracle.grid(&cfg.hydro.domain);
    let prop = SplitOperator::new(&cfg.physical, case, &grid, cfg.oracle.dt)?;
    let mut state = oracle_init(&cfg.physical, &cfg.superposition, &grid)?;
    let steps = (cfg.hydro.t_final / cfg.oracle.dt).round() as usize;
    propagate(&prop, &mut state, steps, steps, |_| Ok(()))?;
    println!("oracle: {steps} steps in {:.1?}", start.elapsed());
    let reference = oracle_fields(&state, cfg.physical.masses(), cfg.physical.hbar, 1e-6);

    let report = compare_snapshots(qtm, &reference, 0.5 * cfg.hydro.dt)?;
    println!(
        "t = {}: L2 {:.4}  Linf {:.4}  v rms {:.3e}",
        report.time, report.l2_rho, report.linf_rho, report.masked_v_rms_diff
    );
    let center = |s: &qhydro::snapshot::FieldSnapshot| s.bilinear(&s.rho, [0.0, 0.0]).unwrap_or(f64::NAN);
    println!("central density ratio {:.4}", center(qtm) / center(&reference));
    Ok(())
}
