use crate::config::RunConfig;
use crate::error::Result;
use crate::snapshot::FieldSnapshot;

use super::dynamics::{advance, stage_for, Stage};
use super::ensemble::{initialize_ensemble, Ensemble};
use super::regrid::{regrid, RegridReport};
use super::tracers::{select_tracers, Tracer, TrajectoryRecord};

/// Receives engine output as it is produced.
pub trait RunSink {
    fn snapshot(&mut self, snapshot: &FieldSnapshot) -> Result<()>;

    /// Tracer records for one output time, sorted by id.
    fn trajectories(&mut self, records: &[TrajectoryRecord]) -> Result<()>;

    fn regrid(&mut self, _report: &RegridReport) -> Result<()> {
        Ok(())
    }

    /// The tracers as they stand at the final time.
    fn tracers(&mut self, _tracers: &[Tracer]) -> Result<()> {
        Ok(())
    }
}

/// Keeps everything in memory.
#[derive(Debug, Default)]
pub struct Collector {
    pub snapshots: Vec<FieldSnapshot>,
    pub trajectories: Vec<TrajectoryRecord>,
    pub regrids: Vec<RegridReport>,
    pub final_tracers: Vec<Tracer>,
}

impl RunSink for Collector {
    fn snapshot(&mut self, snapshot: &FieldSnapshot) -> Result<()> {
        self.snapshots.push(snapshot.clone());
        Ok(())
    }

    fn trajectories(&mut self, records: &[TrajectoryRecord]) -> Result<()> {
        self.trajectories.extend_from_slice(records);
        Ok(())
    }

    fn regrid(&mut self, report: &RegridReport) -> Result<()> {
        let mut report = report.clone();
        report.lineage.clear();
        self.regrids.push(report);
        Ok(())
    }

    fn tracers(&mut self, tracers: &[Tracer]) -> Result<()> {
        self.final_tracers = tracers.to_vec();
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub snapshots: usize,
    pub final_time: f64,
    pub elements: usize,
    pub tracers: usize,
    pub renormalization: f64,
    /// Largest `|norm - 1|` seen before any renormalization.
    pub max_norm_drift: f64,
}

fn tracer_records(ens: &Ensemble, stage: &Stage) -> Vec<TrajectoryRecord> {
    let mut out: Vec<TrajectoryRecord> = ens
        .tracers
        .iter()
        .zip(&stage.tracers)
        .map(|(t, r)| TrajectoryRecord {
            time: ens.time,
            id: t.id(),
            position: t.element.position,
            velocity: r.velocity,
            rho: t.element.density(),
            action: t.element.action,
            q: r.q,
            lq: r.lq,
        })
        .collect();
    out.sort_by_key(|r| r.id);
    out
}

/// Initialize, then alternate `substeps` Heun steps with a regrid until
/// `t_final`, streaming snapshots and tracer records to `sink`.
pub fn run(cfg: &RunConfig, sink: &mut dyn RunSink) -> Result<RunSummary> {
    cfg.validate()?;
    let (phys, case, hydro, mwls) = (&cfg.physical, cfg.case, &cfg.hydro, &cfg.mwls);
    let mut ens = initialize_ensemble(phys, &cfg.superposition, case, hydro)?;
    ens.tracers = select_tracers(&ens.elements, cfg.output.trajectories, phys.hbar);

    let intervals = hydro.intervals();
    let stride = cfg.output.snapshot_stride;
    let mut snapshots = 0;
    let mut max_drift = (ens.discrete_norm() - 1.0).abs();

    let mut stage = stage_for(&ens, phys, case, mwls)?;
    sink.trajectories(&tracer_records(&ens, &stage))?;
    let mut snap = ens.snapshot()?;
    snap.metadata.insert("norm_before".into(), ens.discrete_norm());
    sink.snapshot(&snap)?;
    snapshots += 1;

    for k in 1..=intervals {
        for s in 0..hydro.substeps() {
            if s > 0 {
                stage = stage_for(&ens, phys, case, mwls)?;
            }
            advance(&mut ens, stage, phys, case, hydro, mwls)?;
            stage = Stage::empty();
        }
        ens.time = k as f64 * hydro.regrid_interval;
        let report = regrid(&mut ens, hydro, mwls)?;
        max_drift = max_drift.max((report.norm_before - 1.0).abs());
        sink.regrid(&report)?;

        stage = stage_for(&ens, phys, case, mwls)?;
        sink.trajectories(&tracer_records(&ens, &stage))?;
        if k % stride == 0 || k == intervals {
            let mut snap = ens.snapshot()?;
            snap.metadata.insert("norm_before".into(), report.norm_before);
            snap.metadata.insert("dropped_mass".into(), report.dropped_mass);
            sink.snapshot(&snap)?;
            snapshots += 1;
        }
    }

    sink.tracers(&ens.tracers)?;
    Ok(RunSummary {
        snapshots,
        final_time: ens.time,
        elements: ens.len(),
        tracers: ens.tracers.len(),
        renormalization: ens.renormalization,
        max_norm_drift: max_drift,
    })
}
