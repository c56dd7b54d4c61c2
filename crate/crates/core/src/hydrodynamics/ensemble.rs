use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{initial_log_density, Case, PhysicalParams, SuperpositionParams};
use crate::snapshot::{FieldSnapshot, Mesh, Source};

use super::tracers::Tracer;

/// One Lagrangian fluid element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidElement {
    pub id: u64,
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    /// `ln rho`.
    pub log_density: f64,
    /// Action `S`.
    pub action: f64,
    /// Accumulated `∫ div v dτ` since the element was created.
    pub amp_integral: f64,
    /// Accumulated `∫ L_q dτ` since the element was created.
    pub phase_integral: f64,
}

impl FluidElement {
    pub fn density(&self) -> f64 {
        self.log_density.exp()
    }
}

/// Rectangular simulation domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Default for Domain {
    fn default() -> Self {
        Self {
            x: [-6.0, 6.0],
            y: [-3.0, 3.0],
        }
    }
}

impl Domain {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x[0] && p[0] <= self.x[1] && p[1] >= self.y[0] && p[1] <= self.y[1]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("x", self.x), ("y", self.y)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
                return Err(Error::Config(format!(
                    "hydro.domain.{name} must be an increasing pair, got {r:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Trajectory-engine settings, with per-case defaults already resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HydroConfig {
    pub n_elements_target: usize,
    /// Integrator substep.
    pub dt: f64,
    /// Time between regrids; each regrid produces one output time.
    pub regrid_interval: f64,
    /// Mesh-membership floor, relative to the initial peak density.
    pub density_cutoff: f64,
    pub domain: Domain,
    pub t_final: f64,
    /// Ratio `hy / hx` of the lattice spacings.
    pub aspect_ratio: f64,
    /// Trial lattice points farther than `reach` spacings from every element
    /// are never populated.
    pub reach: f64,
    /// The lattice spacing is kept across regrids while the element count
    /// stays within this relative band of the target.
    pub spacing_band: f64,
}

impl HydroConfig {
    pub fn for_case(case: Case) -> Self {
        let (n, aspect) = match case {
            Case::Uncoupled => (1215, 8.0),
            Case::Coupled => (1175, 1.0),
        };
        Self {
            n_elements_target: n,
            dt: 0.5,
            regrid_interval: 2.0,
            density_cutoff: 1e-7,
            domain: Domain::default(),
            t_final: 450.0,
            aspect_ratio: aspect,
            reach: 1.0,
            spacing_band: 0.15,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("hydro.{name} must be > 0, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("regrid_interval", self.regrid_interval)?;
        positive("density_cutoff", self.density_cutoff)?;
        positive("aspect_ratio", self.aspect_ratio)?;
        positive("reach", self.reach)?;
        positive("spacing_band", self.spacing_band)?;
        if self.density_cutoff >= 1.0 {
            return Err(Error::Config(format!(
                "hydro.density_cutoff is relative to the initial peak and must be < 1, got {}",
                self.density_cutoff
            )));
        }
        if self.n_elements_target < 100 {
            return Err(Error::Config(format!(
                "hydro.n_elements_target must be at least 100, got {}",
                self.n_elements_target
            )));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!(
                "hydro.t_final must be >= 0, got {}",
                self.t_final
            )));
        }
        if whole_multiple(self.regrid_interval, self.dt).is_none() {
            return Err(Error::Config(format!(
                "hydro.regrid_interval ({}) must be an integer multiple of hydro.dt ({})",
                self.regrid_interval, self.dt
            )));
        }
        if self.t_final > 0.0 && whole_multiple(self.t_final, self.regrid_interval).is_none() {
            return Err(Error::Config(format!(
                "hydro.t_final ({}) must be a multiple of hydro.regrid_interval ({})",
                self.t_final, self.regrid_interval
            )));
        }
        self.domain.validate()
    }

    pub fn substeps(&self) -> usize {
        whole_multiple(self.regrid_interval, self.dt).unwrap_or(1)
    }

    /// Number of regrid intervals up to `t_final`.
    pub fn intervals(&self) -> usize {
        if self.t_final == 0.0 {
            0
        } else {
            whole_multiple(self.t_final, self.regrid_interval).unwrap_or(0)
        }
    }
}

fn whole_multiple(total: f64, unit: f64) -> Option<usize> {
    let n = (total / unit).round();
    (n >= 1.0 && (n * unit - total).abs() <= 1e-9 * total.abs().max(1.0)).then_some(n as usize)
}

/// All fluid elements at one time.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub elements: Vec<FluidElement>,
    /// Passive elements following selected lineages continuously from `t = 0`.
    pub tracers: Vec<Tracer>,
    pub time: f64,
    /// Lattice spacings `(hx, hy)`; lattice sites sit at `(i hx, j hy)`.
    pub mesh_spacing: [f64; 2],
    /// Absolute density floor.
    pub density_cutoff: f64,
    /// Product of all renormalization factors applied so far.
    pub renormalization: f64,
    pub(crate) next_id: u64,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.elements.iter().map(|e| e.position).collect()
    }

    /// Coordinate scale under which the lattice is square.
    pub fn coordinate_scale(&self) -> [f64; 2] {
        [1.0, self.mesh_spacing[1] / self.mesh_spacing[0]]
    }

    /// Midpoint-rule norm `Σ rho_i hx hy`.
    pub fn discrete_norm(&self) -> f64 {
        let cell = self.mesh_spacing[0] * self.mesh_spacing[1];
        self.elements.iter().map(|e| e.density()).sum::<f64>() * cell
    }

    /// Lattice indices of every element; fails unless all elements sit on
    /// lattice sites, which holds right after initialization or a regrid.
    pub fn lattice_sites(&self) -> Result<Vec<[i64; 2]>> {
        let [hx, hy] = self.mesh_spacing;
        self.elements
            .iter()
            .map(|e| {
                let fi = e.position[0] / hx;
                let fj = e.position[1] / hy;
                let (i, j) = (fi.round(), fj.round());
                if (fi - i).abs() > 1e-6 || (fj - j).abs() > 1e-6 {
                    return Err(Error::Alignment(format!(
                        "element {} at {:?} is not on the lattice (t = {})",
                        e.id, e.position, self.time
                    )));
                }
                Ok([i as i64, j as i64])
            })
            .collect()
    }

    /// Fields on the smallest rectangular mesh holding every element.
    pub fn snapshot(&self) -> Result<FieldSnapshot> {
        let sites = self.lattice_sites()?;
        let [hx, hy] = self.mesh_spacing;
        let (mut lo, mut hi) = ([i64::MAX; 2], [i64::MIN; 2]);
        for s in &sites {
            for d in 0..2 {
                lo[d] = lo[d].min(s[d]);
                hi[d] = hi[d].max(s[d]);
            }
        }
        if sites.is_empty() {
            lo = [0, 0];
            hi = [0, 0];
        }
        let mesh = Mesh {
            origin: [lo[0] as f64 * hx, lo[1] as f64 * hy],
            spacing: [hx, hy],
            nx: (hi[0] - lo[0] + 1) as usize,
            ny: (hi[1] - lo[1] + 1) as usize,
        };
        let mut snap = FieldSnapshot::empty(self.time, Source::Qtm, mesh);
        for (e, s) in self.elements.iter().zip(&sites) {
            let k = mesh.index((s[0] - lo[0]) as usize, (s[1] - lo[1]) as usize);
            snap.rho[k] = e.density();
            snap.vx[k] = e.velocity[0];
            snap.vy[k] = e.velocity[1];
            snap.s[k] = e.action;
        }
        snap.metadata.insert("elements".into(), self.len() as f64);
        snap.metadata.insert("density_cutoff".into(), self.density_cutoff);
        snap.metadata.insert("renormalization".into(), self.renormalization);
        Ok(snap)
    }
}

/// Largest initial density, found along the `y = 0` line where the bath
/// factor peaks.
pub fn initial_peak_density(phys: &PhysicalParams, sup: &SuperpositionParams) -> f64 {
    let span = sup.a + 2.0 / sup.beta.sqrt();
    let coarse = (0..=2000)
        .map(|i| -span + 2.0 * span * i as f64 / 2000.0)
        .max_by(|a, b| initial_log_density(phys, sup, [*a, 0.0]).total_cmp(&initial_log_density(phys, sup, [*b, 0.0])))
        .unwrap_or(0.0);
    // Golden-section refinement around the best coarse sample.
    let f = |x: f64| initial_log_density(phys, sup, [x, 0.0]);
    let (mut a, mut b) = (coarse - span / 1000.0, coarse + span / 1000.0);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(0.5 * (a + b)).exp()
}

fn lattice_over(domain: &Domain, spacing: [f64; 2]) -> Vec<[f64; 2]> {
    let i0 = (domain.x[0] / spacing[0]).ceil() as i64;
    let i1 = (domain.x[1] / spacing[0]).floor() as i64;
    let j0 = (domain.y[0] / spacing[1]).ceil() as i64;
    let j1 = (domain.y[1] / spacing[1]).floor() as i64;
    let mut pts = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            pts.push([i as f64 * spacing[0], j as f64 * spacing[1]]);
        }
    }
    pts
}

/// Places elements on a uniform lattice over `{rho(x, y, 0) > cutoff}`,
/// choosing the spacing so the element count lands near the target.
pub fn initialize_ensemble(
    phys: &PhysicalParams,
    sup: &SuperpositionParams,
    _case: Case,
    cfg: &HydroConfig,
) -> Result<Ensemble> {
    phys.validate()?;
    sup.validate()?;
    cfg.validate()?;
    let cutoff = cfg.density_cutoff * initial_peak_density(phys, sup);
    let log_cut = cutoff.ln();
    let target = cfg.n_elements_target as f64;

    let occupied = |h: f64| -> Vec<([f64; 2], f64)> {
        lattice_over(&cfg.domain, [h, cfg.aspect_ratio * h])
            .into_iter()
            .map(|p| (p, initial_log_density(phys, sup, p)))
            .filter(|(_, l)| *l > log_cut)
            .collect()
    };

    // Area of the occupied region, from a fine probe lattice, seeds the search.
    let probe = 0.02;
    let area = occupied(probe).len() as f64 * probe * probe * cfg.aspect_ratio;
    let mut h = (area / (target * cfg.aspect_ratio)).sqrt();
    let domain_area = (cfg.domain.x[1] - cfg.domain.x[0]) * (cfg.domain.y[1] - cfg.domain.y[0]);
    let mut best: Option<(f64, Vec<([f64; 2], f64)>)> = None;
    for _ in 0..40 {
        // A vanishing occupied region would otherwise demand an enormous lattice.
        if !(h > 0.0 && h.is_finite()) || domain_area / (h * h * cfg.aspect_ratio) > 1e3 * target {
            break;
        }
        let pts = occupied(h);
        let n = pts.len() as f64;
        let better = best
            .as_ref()
            .is_none_or(|(_, b)| (n - target).abs() < (b.len() as f64 - target).abs());
        if better {
            best = Some((h, pts));
        }
        if (n / target - 1.0).abs() < 0.01 || n == 0.0 {
            break;
        }
        h *= (n / target).sqrt();
    }
    let (h, pts) = best.unwrap_or((h, Vec::new()));
    if pts.len() < 100 {
        return Err(Error::Config(format!(
            "only {} lattice points exceed the density cutoff {cutoff:e}; at least 100 are required",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    if (n / target - 1.0).abs() > 0.1 {
        return Err(Error::Config(format!(
            "could not place {} elements within 10% of the target {}",
            pts.len(),
            cfg.n_elements_target
        )));
    }

    let elements: Vec<FluidElement> = pts
        .into_iter()
        .enumerate()
        .map(|(i, (p, l))| FluidElement {
            id: i as u64,
            position: p,
            velocity: [0.0, 0.0],
            log_density: l,
            action: 0.0,
            amp_integral: 0.0,
            phase_integral: 0.0,
        })
        .collect();
    let next_id = elements.len() as u64;
    Ok(Ensemble {
        elements,
        tracers: Vec::new(),
        time: 0.0,
        mesh_spacing: [h, cfg.aspect_ratio * h],
        density_cutoff: cutoff,
        renormalization: 1.0,
        next_id,
    })
}
