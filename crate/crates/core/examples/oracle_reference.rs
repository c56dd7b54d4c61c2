//! The split-operator reference on its own: unitarity, boundary leakage and
//! the decoherence metrics of both cases along the run.
//!
//!     cargo run --release --example oracle_reference -- [t_final]

use qhydro::analysis::decoherence_metrics;
use qhydro::config::RunConfig;
use qhydro::model::Case;
use qhydro::oracle::{oracle_fields, oracle_init, propagate, SplitOperator};

fn main() -> qhydro::Result<()> {
    let t_final: f64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("t_final must be a number"))
        .unwrap_or(450.0);
    for case in [Case::Uncoupled, Case::Coupled] {
        let cfg = RunConfig::for_case(case);
        let grid = cfg.oracle.grid(&cfg.hydro.domain);
        let prop = SplitOperator::new(&cfg.physical, case, &grid, cfg.oracle.dt)?;
        let mut state = oracle_init(&cfg.physical, &cfg.superposition, &grid)?;
        let steps = (t_final / cfg.oracle.dt).round() as usize;
        let stride = (50.0 / cfg.oracle.dt).round() as usize;
        println!("{case} ({}x{}, dt {})", grid.nx, grid.ny, cfg.oracle.dt);
        println!("       t    rho(0,0)  visibility  lobe sep.       |1 - norm|   edge/peak");
        propagate(&prop, &mut state, steps, stride, |s| {
            let m = decoherence_metrics(&oracle_fields(s, cfg.physical.masses(), cfg.physical.hbar, 0.0));
            println!(
                "{:8.1}  {:10.5}  {:10.4}  {:9.4}  {:15.2e}  {:10.2e}",
                m.time,
                m.central_density,
                m.fringe_visibility,
                m.lobe_separation,
                (1.0 - s.norm()).abs(),
                s.boundary_leakage(5)
            );
            Ok(())
        })?;
    }
    Ok(())
}
