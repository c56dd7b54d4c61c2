//! Command implementations behind the `qhydro` binary: run an engine,
//! analyze snapshot files, compare two sets of snapshots. Each command
//! writes into one output directory and finishes with a manifest.

use std::path::{Path, PathBuf};

use crate::analysis::{
    continuity_mismatch, decoherence_metrics, flux, flux_divergence, interior_points, ns_residual, stress_tensor,
    AnalysisConfig, FieldMap, TimeDifference,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::hydrodynamics::{initial_peak_density, run, RunSink, TrajectoryRecord};
use crate::io::{
    field_map_to_string, fmt_f64, read_manifest, read_snapshot, snapshot_to_string, table_to_string,
    trajectories_to_string, OutputDir, OutputManifest, MANIFEST_NAME,
};
use crate::oracle::{compare_snapshots, oracle_fields, oracle_init, SplitOperator};
use crate::snapshot::FieldSnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Qtm,
    Oracle,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qtm" => Ok(Mode::Qtm),
            "oracle" => Ok(Mode::Oracle),
            other => Err(Error::Config(format!(
                "unknown mode {other:?} (expected qtm or oracle)"
            ))),
        }
    }
}

/// The analyses `cmd_analyze` can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Analysis {
    Flux,
    Stress,
    NsResidual,
    Divergence,
    Metrics,
}

impl Analysis {
    pub const ALL: [Analysis; 5] = [
        Analysis::Flux,
        Analysis::Stress,
        Analysis::NsResidual,
        Analysis::Divergence,
        Analysis::Metrics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::Flux => "flux",
            Analysis::Stress => "stress",
            Analysis::NsResidual => "nsresidual",
            Analysis::Divergence => "divergence",
            Analysis::Metrics => "metrics",
        }
    }

    /// Parses a comma-separated list such as `flux,stress`; `all` selects
    /// everything.
    pub fn parse_list(list: &str) -> Result<Vec<Analysis>> {
        let mut out = Vec::new();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if item == "all" {
                out.extend(Self::ALL);
                continue;
            }
            let a = Self::ALL.into_iter().find(|a| a.name() == item).ok_or_else(|| {
                Error::Config(format!(
                    "unknown analysis {item:?} (expected flux, stress, nsresidual, divergence, metrics or all)"
                ))
            })?;
            out.push(a);
        }
        if out.is_empty() {
            return Err(Error::Config("no analysis selected".into()));
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

fn absolute_cutoff(cfg: &RunConfig) -> f64 {
    cfg.hydro.density_cutoff * initial_peak_density(&cfg.physical, &cfg.superposition)
}

fn snapshot_name(snap: &FieldSnapshot, cfg: &RunConfig) -> String {
    format!("snapshots/{}_{}_t{:09.3}.dat", snap.source.label(), cfg.case, snap.time)
}

struct FileSink<'a> {
    out: &'a mut OutputDir,
    cfg: &'a RunConfig,
    records: Vec<TrajectoryRecord>,
    last_time: Option<f64>,
}

impl RunSink for FileSink<'_> {
    fn snapshot(&mut self, snap: &FieldSnapshot) -> Result<()> {
        self.out.write(
            &snapshot_name(snap, self.cfg),
            "snapshot",
            Some(snap.time),
            &snapshot_to_string(snap),
        )?;
        self.last_time = Some(snap.time);
        Ok(())
    }

    fn trajectories(&mut self, records: &[TrajectoryRecord]) -> Result<()> {
        self.records.extend_from_slice(records);
        Ok(())
    }
}

/// Runs the trajectory engine or the reference solver for the configured
/// case, writing snapshots (and trajectories for `Qtm`) under `out`. On an
/// engine error the files written so far are kept, the manifest records the
/// failure and the last completed snapshot time, and the error is returned.
pub fn cmd_run(cfg: &RunConfig, mode: Mode, out: &Path) -> Result<OutputManifest> {
    cfg.validate()?;
    let mut dir = OutputDir::create(
        out,
        &format!(
            "run --mode {}",
            match mode {
                Mode::Qtm => "qtm",
                Mode::Oracle => "oracle",
            }
        ),
    )?;
    dir.set_config(cfg);
    let (result, last) = match mode {
        Mode::Qtm => {
            let mut sink = FileSink {
                out: &mut dir,
                cfg,
                records: Vec::new(),
                last_time: None,
            };
            let result = run(cfg, &mut sink);
            let (records, last) = (std::mem::take(&mut sink.records), sink.last_time);
            let lineages = records
                .iter()
                .map(|r| r.id)
                .collect::<std::collections::BTreeSet<_>>()
                .len();
            let written = dir.write(
                &format!("trajectories_{}.dat", cfg.case),
                "trajectories",
                None,
                &trajectories_to_string(&records, lineages),
            );
            let result = result.and_then(|summary| {
                written?;
                dir.note(format!(
                    "snapshots {}, final time {}, elements {}, tracers {}, max norm drift {:.3e}, renormalization {}",
                    summary.snapshots,
                    summary.final_time,
                    summary.elements,
                    summary.tracers,
                    summary.max_norm_drift,
                    summary.renormalization
                ));
                Ok(())
            });
            (result, last)
        }
        Mode::Oracle => {
            let mut last = None;
            let result = run_oracle(cfg, |snap| {
                dir.write(
                    &snapshot_name(snap, cfg),
                    "snapshot",
                    Some(snap.time),
                    &snapshot_to_string(snap),
                )?;
                last = Some(snap.time);
                Ok(())
            });
            (result, last)
        }
    };
    match result {
        Ok(()) => dir.finish(None),
        Err(e) => {
            dir.note(match last {
                Some(t) => format!("last completed snapshot at t = {t}"),
                None => "no snapshot completed".to_string(),
            });
            dir.finish(Some(&e))?;
            Err(e)
        }
    }
}

/// Reference snapshots at the engine's output times (every
/// `snapshot_stride` regrid intervals, plus the final time).
pub fn run_oracle(cfg: &RunConfig, mut visit: impl FnMut(&FieldSnapshot) -> Result<()>) -> Result<()> {
    let grid = cfg.oracle.grid(&cfg.hydro.domain);
    let prop = SplitOperator::new(&cfg.physical, cfg.case, &grid, cfg.oracle.dt)?;
    let mut state = oracle_init(&cfg.physical, &cfg.superposition, &grid)?;
    let per_interval = cfg.hydro.regrid_interval / cfg.oracle.dt;
    if (per_interval - per_interval.round()).abs() > 1e-9 || per_interval < 0.5 {
        return Err(Error::Config(format!(
            "oracle.dt = {} must divide hydro.regrid_interval = {}",
            cfg.oracle.dt, cfg.hydro.regrid_interval
        )));
    }
    let per_interval = per_interval.round() as usize;
    let intervals = cfg.hydro.intervals();
    let cutoff = absolute_cutoff(cfg);
    let emit = |state: &crate::oracle::OracleState, visit: &mut dyn FnMut(&FieldSnapshot) -> Result<()>| {
        let mut snap = oracle_fields(state, cfg.physical.masses(), cfg.physical.hbar, cutoff);
        snap.metadata.insert("density_cutoff".into(), cutoff);
        snap.metadata.insert("norm".into(), state.norm());
        visit(&snap)
    };
    emit(&state, &mut visit)?;
    for k in 1..=intervals {
        for _ in 0..per_interval {
            prop.step(&mut state);
        }
        let norm = state.norm();
        if !norm.is_finite() {
            return Err(Error::NumericalFailure {
                time: state.time,
                detail: "reference norm is not finite".into(),
            });
        }
        if k % cfg.output.snapshot_stride == 0 || k == intervals {
            emit(&state, &mut visit)?;
        }
    }
    Ok(())
}

/// Snapshot files named by `inputs`: files are taken as given, directories
/// contribute the snapshots listed in their manifest (or, without one,
/// every `.dat` file below them that is a snapshot).
pub fn collect_snapshot_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if !input.is_dir() {
            if !input.exists() {
                return Err(Error::io(
                    input,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
                ));
            }
            out.push(input.clone());
        } else if input.join(MANIFEST_NAME).exists() {
            let m = read_manifest(input)?;
            out.extend(m.files_with_role("snapshot").map(|f| input.join(&f.path)));
        } else {
            let mut found = Vec::new();
            walk(input, &mut found)?;
            found.sort();
            out.extend(found);
        }
    }
    Ok(out)
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            walk(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "dat") {
            let head = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            if head.starts_with("# kind: snapshot") {
                out.push(path);
            }
        }
    }
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "snapshot".into())
}

fn analysis_config(snap: &FieldSnapshot, cfg: &RunConfig) -> AnalysisConfig {
    AnalysisConfig::new(
        snap.metadata
            .get("density_cutoff")
            .copied()
            .unwrap_or_else(|| absolute_cutoff(cfg)),
    )
}

/// Reads snapshot files and returns them sorted by time.
pub fn read_snapshots(paths: &[PathBuf]) -> Result<Vec<(PathBuf, FieldSnapshot)>> {
    let mut snaps = paths
        .iter()
        .map(|p| read_snapshot(p).map(|s| (p.clone(), s)))
        .collect::<Result<Vec<_>>>()?;
    snaps.sort_by(|a, b| a.1.time.total_cmp(&b.1.time));
    Ok(snaps)
}

/// Emits the requested analysis fields for every snapshot. `cfg` supplies
/// the physical parameters and the case; the density cutoff comes from the
/// snapshot headers when present.
pub fn cmd_analyze(inputs: &[PathBuf], which: &[Analysis], cfg: &RunConfig, out: &Path) -> Result<OutputManifest> {
    let names: Vec<&str> = which.iter().map(|a| a.name()).collect();
    let paths = collect_snapshot_paths(inputs)?;
    if paths.is_empty() {
        return Err(Error::Config("no snapshot files to analyze".into()));
    }
    let snaps = read_snapshots(&paths)?;
    let mut dir = OutputDir::create(out, &format!("analyze --fields {}", names.join(",")))?;
    dir.set_config(cfg);
    let phys = &cfg.physical;
    let mut metrics = Vec::new();
    let mut ns_rows = Vec::new();

    for (i, (path, snap)) in snaps.iter().enumerate() {
        let acfg = analysis_config(snap, cfg);
        let name = stem(path);
        let write_map = |dir: &mut OutputDir, kind: &str, map: &FieldMap| {
            dir.write(
                &format!("{kind}/{name}.dat"),
                kind,
                Some(map.time),
                &field_map_to_string(map, kind),
            )
        };
        for &a in which {
            match a {
                Analysis::Flux => {
                    let [jx, jy] = flux(snap, &acfg);
                    let mut map = FieldMap::new(snap.time, snap.source, snap.mesh);
                    map.push("jx", jx);
                    map.push("jy", jy);
                    write_map(&mut dir, "flux", &map)?;
                }
                Analysis::Stress => {
                    let s = stress_tensor(snap, phys, &acfg)?;
                    write_map(&mut dir, "stress", &s.to_field_map(snap))?;
                }
                Analysis::Divergence => {
                    let mut map = FieldMap::new(snap.time, snap.source, snap.mesh);
                    map.push("div_j", flux_divergence(snap, &acfg)?);
                    write_map(&mut dir, "divergence", &map)?;
                }
                Analysis::Metrics => {
                    let m = decoherence_metrics(snap);
                    metrics.push(vec![m.time, m.central_density, m.fringe_visibility, m.lobe_separation]);
                }
                Analysis::NsResidual => {
                    let Some((_, next)) = snaps.get(i + 1) else { continue };
                    let pair = ns_residual(snap, next, phys, cfg.case, &acfg, TimeDifference::Centered)
                        .and_then(|r| continuity_mismatch(snap, next, &acfg).map(|c| (r, c)));
                    match pair {
                        Ok((r, c)) => {
                            let rel = r.relative(&interior_points(snap, &acfg));
                            ns_rows.push(vec![snap.time, next.time, rel, c]);
                            write_map(&mut dir, "nsresidual", &r.to_field_map(snap))?;
                        }
                        Err(Error::Alignment(msg)) => {
                            dir.note(format!(
                                "nsresidual pair t = {} .. {} skipped: {msg}",
                                snap.time, next.time
                            ));
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
        }
    }
    if which.contains(&Analysis::Metrics) {
        let text = table_to_string(
            "metrics",
            &[("fringe_window".into(), fmt_f64(crate::analysis::VISIBILITY_WINDOW))],
            &["t", "central_density", "fringe_visibility", "lobe_separation"],
            &metrics,
        );
        dir.write("metrics.dat", "metrics", None, &text)?;
    }
    if which.contains(&Analysis::NsResidual) {
        let text = table_to_string(
            "nsresidual_summary",
            &[
                ("scheme".into(), "centered".into()),
                ("points".into(), "interior".into()),
            ],
            &["t0", "t1", "momentum_relative", "continuity_relative"],
            &ns_rows,
        );
        dir.write("nsresidual.dat", "nsresidual_summary", None, &text)?;
    }
    dir.finish(None)
}

/// Per-time density and velocity errors of `qtm` snapshots against
/// `reference` snapshots. Every engine snapshot needs a reference snapshot
/// at the same time.
pub fn cmd_compare(qtm: &[PathBuf], reference: &[PathBuf], out: &Path) -> Result<OutputManifest> {
    let qtm = read_snapshots(&collect_snapshot_paths(qtm)?)?;
    let reference = read_snapshots(&collect_snapshot_paths(reference)?)?;
    if qtm.is_empty() {
        return Err(Error::Config("no engine snapshots to compare".into()));
    }
    let tol = 1e-6;
    let mut pairs = Vec::new();
    let mut missing = Vec::new();
    for (_, q) in &qtm {
        match reference.iter().find(|(_, r)| (r.time - q.time).abs() <= tol) {
            Some((_, r)) => pairs.push((q, r)),
            None => missing.push(q.time),
        }
    }
    if !missing.is_empty() {
        let available: Vec<f64> = reference.iter().map(|(_, r)| r.time).collect();
        return Err(Error::Alignment(format!(
            "no reference snapshot at t = {missing:?}; reference times available: {available:?}"
        )));
    }
    let mut rows = Vec::new();
    for (q, r) in pairs {
        let e = compare_snapshots(q, r, tol)?;
        rows.push(vec![
            e.time,
            e.l2_rho,
            e.linf_rho,
            e.masked_v_rms_diff,
            e.velocity_points as f64,
        ]);
    }
    let mut dir = OutputDir::create(out, "compare")?;
    let max = |c: usize| rows.iter().map(|r| r[c]).fold(0.0f64, f64::max);
    let last = rows.last().expect("at least one pair");
    let header = vec![
        ("pairs".to_string(), rows.len().to_string()),
        ("max_l2_rho".to_string(), fmt_f64(max(1))),
        ("max_linf_rho".to_string(), fmt_f64(max(2))),
        ("final_time".to_string(), fmt_f64(last[0])),
        ("final_l2_rho".to_string(), fmt_f64(last[1])),
        ("final_linf_rho".to_string(), fmt_f64(last[2])),
    ];
    let text = table_to_string(
        "compare",
        &header,
        &["t", "l2_rho", "linf_rho", "v_rms_diff", "velocity_points"],
        &rows,
    );
    dir.write("compare.dat", "compare", None, &text)?;
    dir.finish(None)
}
