use crate::error::{Error, Result};
use crate::mwls::{MwlsConfig, ScaledCloud, StencilSet};

use super::ensemble::{Ensemble, FluidElement, HydroConfig};

/// Bookkeeping from one regrid.
#[derive(Debug, Clone, PartialEq)]
pub struct RegridReport {
    pub time: f64,
    /// Discrete norm of the interpolated density before renormalization.
    pub norm_before: f64,
    /// Mass on trial points that fell below the density cutoff.
    pub dropped_mass: f64,
    pub elements: usize,
    pub mesh_spacing: [f64; 2],
    /// `(new id, parent id)`: each new element's nearest pre-regrid element.
    pub lineage: Vec<(u64, u64)>,
}

enum Clamp {
    Above,
    Both,
}

/// Fitted values at the stencil centers, clipped to the stencil's sample
/// range. Clipping from above stops an extrapolated density bump at the
/// cloud edge from seeding new mass; values are otherwise unchanged where
/// the fit lies between its samples.
fn interpolate(set: &StencilSet, field: &[f64], clamp: Clamp) -> Vec<f64> {
    let values = set.values(field);
    let ranges = set.sample_ranges(field);
    values
        .into_iter()
        .zip(ranges)
        .map(|(v, (lo, hi))| match clamp {
            Clamp::Above => v.min(hi),
            Clamp::Both => v.clamp(lo, hi),
        })
        .collect()
}

struct Trial {
    hx: f64,
    points: Vec<[f64; 2]>,
    log_density: Vec<f64>,
    stencils: StencilSet,
}

/// Replaces the elements with a fresh lattice population.
///
/// The trial lattice spans the cloud's bounding box plus one spacing, limited
/// to points within `reach` spacings of an existing element; points whose
/// interpolated density exceeds the cutoff become the new elements. The
/// spacing is only re-chosen when the resulting count leaves the configured
/// band around the target. Densities are renormalized to unit discrete norm.
pub fn regrid(ensemble: &mut Ensemble, hydro: &HydroConfig, mwls: &MwlsConfig) -> Result<RegridReport> {
    let old = &ensemble.elements;
    if old.is_empty() {
        return Err(Error::Config("cannot regrid an empty ensemble".into()));
    }
    let aspect = hydro.aspect_ratio;
    let scale = [1.0, aspect];
    let positions: Vec<[f64; 2]> = old.iter().map(|e| e.position).collect();
    let cloud = ScaledCloud::new(&positions, scale)?;
    let log_density: Vec<f64> = old.iter().map(|e| e.log_density).collect();
    let log_cut = ensemble.density_cutoff.ln();
    let h_old = ensemble.mesh_spacing[0];

    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &positions {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let trial = |hx: f64| -> Result<Trial> {
        let hv = [hx, aspect * hx];
        let i0 = ((lo[0] - hv[0]) / hv[0]).floor() as i64;
        let i1 = ((hi[0] + hv[0]) / hv[0]).ceil() as i64;
        let j0 = ((lo[1] - hv[1]) / hv[1]).floor() as i64;
        let j1 = ((hi[1] + hv[1]) / hv[1]).ceil() as i64;
        let reach = hydro.reach * hx.max(h_old);
        let mut points = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                let p = [i as f64 * hv[0], j as f64 * hv[1]];
                if !hydro.domain.contains(p) {
                    continue;
                }
                if cloud.nearest(p).is_some_and(|(_, d)| d <= reach) {
                    points.push(p);
                }
            }
        }
        let stencils = cloud.stencils_at(&points, mwls)?;
        let log_density = interpolate(&stencils, &log_density, Clamp::Above);
        Ok(Trial {
            hx,
            points,
            log_density,
            stencils,
        })
    };
    let occupied = |t: &Trial| t.log_density.iter().filter(|l| **l > log_cut).count();

    let target = hydro.n_elements_target as f64;
    let mut current = trial(h_old)?;
    let n = occupied(&current) as f64;
    if n > 0.0 && (n / target - 1.0).abs() > hydro.spacing_band {
        current = trial(h_old * (n / target).sqrt())?;
    }
    let keep: Vec<usize> = (0..current.points.len())
        .filter(|&k| current.log_density[k] > log_cut)
        .collect();
    if keep.is_empty() {
        return Err(Error::Config(format!(
            "every interpolated density fell below the cutoff {:e} at t = {}",
            ensemble.density_cutoff, ensemble.time
        )));
    }

    let vx: Vec<f64> = old.iter().map(|e| e.velocity[0]).collect();
    let vy: Vec<f64> = old.iter().map(|e| e.velocity[1]).collect();
    let action: Vec<f64> = old.iter().map(|e| e.action).collect();
    let new_vx = interpolate(&current.stencils, &vx, Clamp::Both);
    let new_vy = interpolate(&current.stencils, &vy, Clamp::Both);
    let new_s = interpolate(&current.stencils, &action, Clamp::Both);

    let hx = current.hx;
    let cell = hx * hx * aspect;
    let kept_mass: f64 = keep.iter().map(|&k| current.log_density[k].exp()).sum::<f64>() * cell;
    let dropped_mass: f64 = current
        .log_density
        .iter()
        .filter(|l| **l <= log_cut)
        .map(|l| l.exp())
        .sum::<f64>()
        * cell;
    if !(kept_mass > 0.0 && kept_mass.is_finite()) {
        return Err(Error::NumericalFailure {
            time: ensemble.time,
            detail: format!("interpolated norm is {kept_mass}"),
        });
    }
    let shift = kept_mass.ln();

    let mut elements = Vec::with_capacity(keep.len());
    let mut lineage = Vec::with_capacity(keep.len());
    for &k in &keep {
        let id = ensemble.next_id;
        ensemble.next_id += 1;
        let p = current.points[k];
        if let Some((parent, _)) = cloud.nearest(p) {
            lineage.push((id, old[parent].id));
        }
        elements.push(FluidElement {
            id,
            position: p,
            velocity: [new_vx[k], new_vy[k]],
            log_density: current.log_density[k] - shift,
            action: new_s[k],
            amp_integral: 0.0,
            phase_integral: 0.0,
        });
    }
    for t in &mut ensemble.tracers {
        t.element.log_density -= shift;
        t.element.amp_integral += shift;
    }
    ensemble.elements = elements;
    ensemble.mesh_spacing = [hx, aspect * hx];
    ensemble.renormalization /= kept_mass;

    Ok(RegridReport {
        time: ensemble.time,
        norm_before: kept_mass,
        dropped_mass,
        elements: ensemble.elements.len(),
        mesh_spacing: ensemble.mesh_spacing,
        lineage,
    })
}
