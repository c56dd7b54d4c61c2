//! Run configuration: a TOML document whose every key is optional.
//!
//! ```toml
//! case = "uncoupled"          # or "coupled"
//!
//! [physical]                  # m0, m, omega, c, hbar
//! [superposition]             # a, beta
//! [hydro]                     # n_elements_target, dt, regrid_interval,
//!                             # density_cutoff, t_final, aspect_ratio,
//!                             # reach, spacing_band
//! [hydro.domain]              # x = [lo, hi], y = [lo, hi]
//! [mwls]                      # n_b, weight_scale
//! [oracle]                    # nx, ny, dt
//! [output]                    # directory, trajectories, snapshot_stride
//! ```
//!
//! Unknown keys are rejected. Defaults that depend on the case
//! (`hydro.n_elements_target`, `hydro.aspect_ratio`, `mwls.n_b`) are resolved
//! after the case is known, so a command-line case switch picks them up.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydrodynamics::{Domain, HydroConfig};
use crate::model::{Case, PhysicalParams, SuperpositionParams};
use crate::mwls::MwlsConfig;
use crate::oracle::OracleGrid;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    case: Option<Case>,
    #[serde(default)]
    physical: PhysicalParams,
    #[serde(default)]
    superposition: SuperpositionParams,
    #[serde(default)]
    hydro: RawHydro,
    #[serde(default)]
    mwls: RawMwls,
    #[serde(default)]
    oracle: RawOracle,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHydro {
    n_elements_target: Option<usize>,
    dt: Option<f64>,
    regrid_interval: Option<f64>,
    density_cutoff: Option<f64>,
    t_final: Option<f64>,
    aspect_ratio: Option<f64>,
    reach: Option<f64>,
    spacing_band: Option<f64>,
    domain: Option<Domain>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMwls {
    n_b: Option<usize>,
    weight_scale: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOracle {
    nx: Option<usize>,
    ny: Option<usize>,
    dt: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<PathBuf>,
    trajectories: Option<usize>,
    snapshot_stride: Option<usize>,
}

/// Reference-solver settings. The grid covers the trajectory engine's domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleSettings {
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
}

impl OracleSettings {
    pub fn grid(&self, domain: &Domain) -> OracleGrid {
        OracleGrid {
            nx: self.nx,
            ny: self.ny,
            x_range: domain.x,
            y_range: domain.y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSettings {
    pub directory: PathBuf,
    /// Number of lineages followed in the trajectory output.
    pub trajectories: usize,
    /// Every `snapshot_stride`-th output time is written.
    pub snapshot_stride: usize,
}

/// Fully resolved and validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub case: Case,
    pub physical: PhysicalParams,
    pub superposition: SuperpositionParams,
    pub hydro: HydroConfig,
    pub mwls: MwlsConfig,
    pub oracle: OracleSettings,
    pub output: OutputSettings,
}

impl RunConfig {
    /// Defaults for `case`, identical to loading an empty document.
    pub fn for_case(case: Case) -> Self {
        resolve(RawConfig::default(), Some(case)).expect("defaults are valid")
    }

    pub fn validate(&self) -> Result<()> {
        self.physical.validate()?;
        self.superposition.validate()?;
        self.hydro.validate()?;
        self.mwls.validate()?;
        self.oracle.grid(&self.hydro.domain).validate()?;
        if !(self.oracle.dt > 0.0 && self.oracle.dt.is_finite()) {
            return Err(Error::Config(format!("oracle.dt must be > 0, got {}", self.oracle.dt)));
        }
        if self.output.snapshot_stride == 0 {
            return Err(Error::Config("output.snapshot_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// The configuration as TOML, for manifests.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

fn resolve(raw: RawConfig, case_override: Option<Case>) -> Result<RunConfig> {
    let case = case_override.or(raw.case).unwrap_or(Case::Uncoupled);
    let mut hydro = HydroConfig::for_case(case);
    let h = raw.hydro;
    hydro.n_elements_target = h.n_elements_target.unwrap_or(hydro.n_elements_target);
    hydro.dt = h.dt.unwrap_or(hydro.dt);
    hydro.regrid_interval = h.regrid_interval.unwrap_or(hydro.regrid_interval);
    hydro.density_cutoff = h.density_cutoff.unwrap_or(hydro.density_cutoff);
    hydro.t_final = h.t_final.unwrap_or(hydro.t_final);
    hydro.aspect_ratio = h.aspect_ratio.unwrap_or(hydro.aspect_ratio);
    hydro.reach = h.reach.unwrap_or(hydro.reach);
    hydro.spacing_band = h.spacing_band.unwrap_or(hydro.spacing_band);
    hydro.domain = h.domain.unwrap_or(hydro.domain);

    let mwls = MwlsConfig {
        n_b: raw.mwls.n_b.unwrap_or(match case {
            Case::Uncoupled => 35,
            Case::Coupled => 30,
        }),
        weight_scale: raw.mwls.weight_scale.unwrap_or(ENGINE_WEIGHT_SCALE),
    };
    let grid = OracleGrid::default();
    let oracle = OracleSettings {
        nx: raw.oracle.nx.unwrap_or(grid.nx),
        ny: raw.oracle.ny.unwrap_or(grid.ny),
        dt: raw.oracle.dt.unwrap_or(0.5),
    };
    let output = OutputSettings {
        directory: raw.output.directory.unwrap_or_else(|| PathBuf::from("out")),
        trajectories: raw.output.trajectories.unwrap_or(200),
        snapshot_stride: raw.output.snapshot_stride.unwrap_or(1),
    };
    let cfg = RunConfig {
        case,
        physical: raw.physical,
        superposition: raw.superposition,
        hydro,
        mwls,
        oracle,
        output,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Gaussian bandwidth used by the trajectory engine unless configured.
pub const ENGINE_WEIGHT_SCALE: f64 = 0.5;

/// Parses and validates a configuration document.
pub fn load_config(text: &str, case_override: Option<Case>) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string().trim_end().to_string()))?;
    resolve(raw, case_override)
}

pub fn load_config_file(path: &Path, case_override: Option<Case>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_config(&text, case_override).map_err(|e| match e {
        Error::ConfigParse(msg) => Error::ConfigParse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_paper_defaults() {
        let cfg = load_config("", None).unwrap();
        assert_eq!(cfg.case, Case::Uncoupled);
        assert_eq!(cfg.physical.m0, 2000.0);
        assert_eq!(cfg.physical.m, 2000.0);
        assert_eq!(cfg.physical.omega, 0.004556);
        assert_eq!(cfg.physical.c, 0.015);
        assert_eq!(cfg.superposition.a, 0.8);
        assert_eq!(cfg.superposition.beta, 4.5);
        assert_eq!(cfg.mwls.n_b, 35);
        assert_eq!(cfg.hydro.n_elements_target, 1215);
        assert_eq!(cfg.output.trajectories, 200);
        let coupled = load_config("", Some(Case::Coupled)).unwrap();
        assert_eq!(coupled.mwls.n_b, 30);
        assert_eq!(coupled.hydro.n_elements_target, 1175);
        assert_eq!(RunConfig::for_case(Case::Coupled), coupled);
    }

    #[test]
    fn case_in_document_and_override() {
        let cfg = load_config("case = \"coupled\"\n[mwls]\nn_b = 40\n", None).unwrap();
        assert_eq!(cfg.case, Case::Coupled);
        assert_eq!(cfg.mwls.n_b, 40);
        assert_eq!(cfg.hydro.n_elements_target, 1175);
        let cfg = load_config("case = \"coupled\"\n", Some(Case::Uncoupled)).unwrap();
        assert_eq!(cfg.hydro.n_elements_target, 1215);
    }

    #[test]
    fn negative_dt_is_a_validation_error() {
        let err = load_config("[hydro]\ndt = -1\n", None).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("hydro.dt")), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_are_parse_errors() {
        let err = load_config("[hydr]\ndt = 0.5\n", None).unwrap_err();
        assert!(matches!(err, Error::ConfigParse(ref m) if m.contains("hydr")), "{err}");
        let err = load_config("[hydro]\ndtt = 0.5\n", None).unwrap_err();
        assert!(
            matches!(err, Error::ConfigParse(ref m) if m.contains("dtt") && m.contains("line 2")),
            "{err}"
        );
        assert!(load_config("[physical]\nmass = 3\n", None).is_err());
        assert!(load_config("[hydro.domain]\nx = [-6, 6]\n", None).is_err());
        assert_eq!(load_config("this is not toml", None).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn full_document_round_trips_through_toml() {
        let cfg = RunConfig::for_case(Case::Coupled);
        let again = load_config(&cfg.to_toml(), None).unwrap();
        assert_eq!(again, cfg);
    }
}
