//! Flux, stress and momentum-balance diagnostics for one case near
//! `t = 400`.
//!
//!     cargo run --release --example flux_and_stress -- [uncoupled|coupled] [t] [qtm|oracle]

use qhydro::analysis::{
    continuity_mismatch, flux_band_fraction, flux_divergence, interior_points, ns_residual, stress_tensor,
    AnalysisConfig, StressFields, TimeDifference,
};
use qhydro::config::RunConfig;
use qhydro::hydrodynamics::{run, Collector};
use qhydro::model::Case;
use qhydro::oracle::{oracle_fields, oracle_init, propagate, SplitOperator};
use qhydro::snapshot::{FieldSnapshot, Source};

fn main() -> qhydro::Result<()> {
    let mut args = std::env::args().skip(1);
    let case: Case = args.next().as_deref().unwrap_or("uncoupled").parse()?;
    let t: f64 = args
        .next()
        .map(|s| s.parse().expect("t must be a number"))
        .unwrap_or(400.0);
    let mut cfg = RunConfig::for_case(case);
    cfg.hydro.t_final = t + cfg.hydro.regrid_interval;
    let source: Source = args
        .next()
        .as_deref()
        .unwrap_or("qtm")
        .parse()
        .expect("source is qtm or oracle");
    let snapshots = match source {
        Source::Qtm => {
            let mut sink = Collector::default();
            run(&cfg, &mut sink)?;
            sink.snapshots
        }
        Source::Oracle => reference(&cfg)?,
    };

    let n = snapshots.len();
    let (before, snap, after) = (&snapshots[n - 3], &snapshots[n - 2], &snapshots[n - 1]);
    let cutoff =
        cfg.hydro.density_cutoff * qhydro::hydrodynamics::initial_peak_density(&cfg.physical, &cfg.superposition);
    let acfg = AnalysisConfig::new(cutoff);
    let phys = &cfg.physical;

    let div = flux_divergence(snap, &acfg)?;
    let origin = snap.nearest_index([0.0, 0.0]).expect("origin on mesh");
    let (band, count) = flux_band_fraction(snap, &acfg, 0.3);
    println!(
        "t = {}: div j(0,0) = {:+.4e}; inward flux in |x| < 0.3: {:.1}% of {count}",
        snap.time,
        div[origin],
        100.0 * band
    );

    let stress = stress_tensor(snap, phys, &acfg)?;
    let (classical, osmotic) = stress.diagonal_terms(1);
    println!(
        "max m rho v_y^2 = {:.3e}, max m rho u_y^2 = {:.3e}, max |P| = {:.3e}; compact/decomposed gap {:.1e}",
        StressFields::mesh_max(classical),
        StressFields::mesh_max(&osmotic),
        stress
            .pressure
            .iter()
            .filter(|p| !p.is_nan())
            .fold(0.0f64, |a, p| a.max(p.abs())),
        stress.identity_error()
    );

    for (a, b) in [(before, snap), (snap, after)] {
        let r = match ns_residual(a, b, phys, case, &acfg, TimeDifference::Centered) {
            Ok(r) => r,
            Err(e) => {
                println!("[{}, {}]: skipped ({e})", a.time, b.time);
                continue;
            }
        };
        let interior = interior_points(a, &acfg);
        println!(
            "[{}, {}]: momentum residual {:.2}% (interior), {:.2}% (all); continuity mismatch {:.2}%",
            a.time,
            b.time,
            100.0 * r.relative(&interior),
            100.0 * r.relative(&r.evaluated()),
            100.0 * continuity_mismatch(a, b, &acfg)?
        );
    }
    Ok(())
}

/// Reference snapshots at every regrid time.
fn reference(cfg: &RunConfig) -> qhydro::Result<Vec<FieldSnapshot>> {
    let grid = cfg.oracle.grid(&cfg.hydro.domain);
    let prop = SplitOperator::new(&cfg.physical, cfg.case, &grid, cfg.oracle.dt)?;
    let mut state = oracle_init(&cfg.physical, &cfg.superposition, &grid)?;
    let steps = (cfg.hydro.t_final / cfg.oracle.dt).round() as usize;
    let stride = (cfg.hydro.regrid_interval / cfg.oracle.dt).round() as usize;
    let mut out = Vec::new();
    propagate(&prop, &mut state, steps, stride, |s| {
        out.push(oracle_fields(s, cfg.physical.masses(), cfg.physical.hbar, 0.0));
        Ok(())
    })?;
    Ok(out)
}
