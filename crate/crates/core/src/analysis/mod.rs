//! Diagnostic fields computed from snapshots: flux, osmotic velocity,
//! quantum pressure, the stress tensor, the momentum-balance residual,
//! flux divergence and scalar decoherence metrics.
//!
//! Everything here is a pure function of its input snapshots. Fields are
//! evaluated only where `rho > 10 * density_cutoff` and the velocity is
//! defined; every other mesh point carries NaN.
//!
//! Spatial derivatives come from weighted local polynomial fits (degree 6
//! by default, lower on one-sided stencils) over the evaluated points, in
//! coordinates scaled by the mesh spacings. The osmotic velocity comes from
//! the `ln rho` fit; derivatives of `rho` and of other density-weighted
//! fields are taken relative to a local Gaussian envelope (see [`Frame`]).

mod local;
mod metrics;
mod residual;
mod stress;

pub use metrics::{decoherence_metrics, flux_band_fraction, DecoherenceMetrics, VISIBILITY_WINDOW};
pub use residual::{continuity_mismatch, ns_residual, NsResidual, TimeDifference};
pub use stress::{stress_tensor, StressFields};

use crate::error::{Error, Result};
use crate::model::PhysicalParams;
use rayon::prelude::*;

use crate::mwls::{Derivatives, MwlsConfig, ScaledCloud};

use crate::snapshot::{FieldSnapshot, Mesh, Source};
use local::{basis_size, LocalOperator};

/// Evaluated points sit above `MASK_FACTOR * density_cutoff`.
pub const MASK_FACTOR: f64 = 10.0;

/// Default fit degree and stencil size.
pub const DEGREE: usize = 6;
pub const NEIGHBORS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig {
    /// Absolute density floor of the run that produced the snapshots.
    pub density_cutoff: f64,
    /// Total degree of the local polynomial fits.
    pub degree: usize,
    /// Neighbor count and weight bandwidth of the fits.
    pub mwls: MwlsConfig,
}

impl AnalysisConfig {
    pub fn new(density_cutoff: f64) -> Self {
        Self {
            density_cutoff,
            degree: DEGREE,
            mwls: MwlsConfig {
                n_b: NEIGHBORS,
                weight_scale: 0.5,
            },
        }
    }

    pub fn threshold(&self) -> f64 {
        MASK_FACTOR * self.density_cutoff
    }
}

/// Named per-point columns on a snapshot mesh, ready for writing.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMap {
    pub time: f64,
    pub source: Source,
    pub mesh: Mesh,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl FieldMap {
    pub fn new(time: f64, source: Source, mesh: Mesh) -> Self {
        Self {
            time,
            source,
            mesh,
            columns: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.mesh.len());
        self.columns.push((name.to_string(), values));
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

/// Mesh points entering an analysis, with local polynomial fits over them
/// and the fitted `ln rho`.
///
/// Derivatives of density-weighted fields `F` are taken through a local
/// envelope: with `q` the quadratic Taylor part of the `ln rho` fit around a
/// stencil center, the polynomial is fitted to `F exp(-q)` and the product rule
/// restores `F`. The envelope strips the Gaussian factor, so Gaussian
/// densities times low-order polynomials are differentiated exactly, while
/// interference fringes are fitted in `rho`, not in `ln rho`, where they are
/// far smoother.
pub(crate) struct Frame<'a> {
    pub snap: &'a FieldSnapshot,
    /// Mesh indices of the evaluated points.
    pub points: Vec<usize>,
    /// One local fit per evaluated point, in scaled coordinates.
    operators: Vec<LocalOperator>,
    scale: [f64; 2],
    /// Positions in scaled coordinates.
    scaled: Vec<[f64; 2]>,
    /// Quadratic part of the `ln rho` fit per point, in scaled units:
    /// coefficients of `x, y, x^2, y^2, xy`.
    envelope: Vec<[f64; 5]>,
    pub log_rho: Vec<Derivatives>,
}

/// Largest deviation, in `ln rho`, between the envelope and the samples of
/// a stencil for the envelope to be used. Beyond it (next to a density
/// minimum) the field is fitted directly.
pub const ENVELOPE_MISFIT: f64 = 1.0;

fn envelope_at(e: &[f64; 5], d: [f64; 2]) -> f64 {
    let [dx, dy] = d;
    e[0] * dx + e[1] * dy + e[2] * dx * dx + e[3] * dy * dy + e[4] * dx * dy
}

/// Envelope coefficients from a `ln rho` fit, with the curvature projected
/// onto its negative semidefinite part. Near a density minimum `ln rho` curves
/// upward and an unclipped `exp(-q)` would blow up across the stencil.
fn concave_envelope(d: &Derivatives) -> [f64; 5] {
    let (a, b, c) = (d.f_xx, d.f_xy, d.f_yy);
    let mean = 0.5 * (a + c);
    let radius = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (l1, l2) = (mean + radius, mean - radius);
    let (a, b, c) = if l2 >= 0.0 {
        (0.0, 0.0, 0.0)
    } else if l1 > 0.0 {
        // Keep only the eigenvector with the negative eigenvalue l2.
        let (vx, vy) = if b.abs() > 1e-300 {
            (b, l2 - a)
        } else if a < c {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        let n2 = vx * vx + vy * vy;
        (l2 * vx * vx / n2, l2 * vx * vy / n2, l2 * vy * vy / n2)
    } else {
        (a, b, c)
    };
    [d.f_x, d.f_y, 0.5 * a, 0.5 * c, b]
}

impl<'a> Frame<'a> {
    pub fn new(snap: &'a FieldSnapshot, cfg: &AnalysisConfig) -> Result<Self> {
        let points = snap.evaluated_points(cfg.threshold());
        let scale = snap.mesh.spacing;
        let mut frame = Self {
            snap,
            points,
            operators: Vec::new(),
            scale,
            scaled: Vec::new(),
            envelope: Vec::new(),
            log_rho: Vec::new(),
        };
        if frame.points.is_empty() {
            return Ok(frame);
        }
        let nb = basis_size(cfg.degree);
        if cfg.mwls.n_b < nb {
            return Err(Error::Config(format!(
                "analysis needs at least {nb} neighbors for degree {}, got {}",
                cfg.degree, cfg.mwls.n_b
            )));
        }
        let positions: Vec<[f64; 2]> = frame.points.iter().map(|&k| snap.mesh.point_at(k)).collect();
        frame.scaled = positions.iter().map(|p| [p[0] / scale[0], p[1] / scale[1]]).collect();
        let cloud = ScaledCloud::new(&positions, scale)?;
        let stencils = cloud.stencils_at_cloud_widening(&cfg.mwls)?;
        let scaled = &frame.scaled;
        frame.operators = stencils
            .stencils()
            .par_iter()
            .enumerate()
            .map(|(p, s)| {
                let c = scaled[p];
                let d: Vec<[f64; 2]> = s
                    .neighbors
                    .iter()
                    .map(|&j| [scaled[j][0] - c[0], scaled[j][1] - c[1]])
                    .collect();
                LocalOperator::best(s.neighbors.clone(), &d, cfg.degree, cfg.mwls.weight_scale).ok_or_else(|| {
                    Error::DegenerateGeometry {
                        index: p,
                        target: positions[p],
                        reason: format!("{} neighbors cannot support a degree {} fit", d.len(), cfg.degree),
                    }
                })
            })
            .collect::<Result<_>>()?;
        let ln: Vec<f64> = frame.points.iter().map(|&k| snap.rho[k].ln()).collect();
        let fits: Vec<Derivatives> = frame.operators.par_iter().map(|op| op.apply_field(&ln)).collect();
        let scaled = &frame.scaled;
        frame.envelope = fits
            .iter()
            .zip(&frame.operators)
            .enumerate()
            .map(|(p, (d, op))| {
                let e = concave_envelope(d);
                let c = scaled[p];
                let misfit = op
                    .neighbors
                    .iter()
                    .map(|&j| (ln[j] - d.f - envelope_at(&e, [scaled[j][0] - c[0], scaled[j][1] - c[1]])).abs())
                    .fold(0.0, f64::max);
                if misfit > ENVELOPE_MISFIT {
                    [0.0; 5]
                } else {
                    e
                }
            })
            .collect();
        frame.log_rho = fits.iter().map(|d| frame.unscale(d)).collect();
        Ok(frame)
    }

    /// Converts derivatives in scaled coordinates to physical ones.
    fn unscale(&self, d: &Derivatives) -> Derivatives {
        let [sx, sy] = self.scale;
        Derivatives {
            f: d.f,
            f_x: d.f_x / sx,
            f_y: d.f_y / sy,
            f_xx: d.f_xx / (sx * sx),
            f_yy: d.f_yy / (sy * sy),
            f_xy: d.f_xy / (sx * sy),
        }
    }

    pub fn rho(&self, p: usize) -> f64 {
        self.snap.rho[self.points[p]]
    }

    pub fn velocity(&self, p: usize) -> [f64; 2] {
        self.snap.velocity(self.points[p])
    }

    pub fn position(&self, p: usize) -> [f64; 2] {
        self.snap.mesh.point_at(self.points[p])
    }

    /// Value and derivatives of a density-weighted field sampled at the
    /// evaluated points, through the local envelope.
    pub fn weighted_derivatives(&self, field: &[f64]) -> Vec<Derivatives> {
        self.operators
            .par_iter()
            .zip(&self.envelope)
            .enumerate()
            .map(|(p, (op, e))| {
                let c = self.scaled[p];
                let samples: Vec<f64> = op
                    .neighbors
                    .iter()
                    .map(|&j| {
                        let (dx, dy) = (self.scaled[j][0] - c[0], self.scaled[j][1] - c[1]);
                        field[j] * (-envelope_at(e, [dx, dy])).exp()
                    })
                    .collect();
                let g = op.apply(&samples);
                let (qx, qy) = (e[0], e[1]);
                let (qxx, qyy, qxy) = (2.0 * e[2], 2.0 * e[3], e[4]);
                self.unscale(&Derivatives {
                    f: g.f,
                    f_x: g.f_x + qx * g.f,
                    f_y: g.f_y + qy * g.f,
                    f_xx: g.f_xx + 2.0 * qx * g.f_x + (qxx + qx * qx) * g.f,
                    f_yy: g.f_yy + 2.0 * qy * g.f_y + (qyy + qy * qy) * g.f,
                    f_xy: g.f_xy + qx * g.f_y + qy * g.f_x + (qxy + qx * qy) * g.f,
                })
            })
            .collect()
    }

    /// Divergence of a density-weighted vector field given per point.
    pub fn divergence(&self, field: &[[f64; 2]]) -> Vec<f64> {
        let dx = self.weighted_derivatives(&field.iter().map(|f| f[0]).collect::<Vec<_>>());
        let dy = self.weighted_derivatives(&field.iter().map(|f| f[1]).collect::<Vec<_>>());
        dx.iter().zip(&dy).map(|(a, b)| a.f_x + b.f_y).collect()
    }

    /// Scatters per-point values onto the mesh, NaN elsewhere.
    pub fn scatter(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![f64::NAN; self.snap.mesh.len()];
        for (p, &k) in self.points.iter().enumerate() {
            out[k] = values[p];
        }
        out
    }

    /// Osmotic velocity `u_i = -(hbar / 2 m_i) d(ln rho)/dx_i` per point.
    pub fn osmotic(&self, phys: &PhysicalParams) -> Vec<[f64; 2]> {
        let [m0, m] = phys.masses();
        self.log_rho
            .iter()
            .map(|l| [-phys.hbar / (2.0 * m0) * l.f_x, -phys.hbar / (2.0 * m) * l.f_y])
            .collect()
    }

    /// `P = -(hbar^2 / 4) (rho_xx / m0 + rho_yy / m)`.
    pub fn pressure(&self, phys: &PhysicalParams) -> Vec<f64> {
        let [m0, m] = phys.masses();
        let h2 = phys.hbar * phys.hbar;
        let rho: Vec<f64> = (0..self.points.len()).map(|p| self.rho(p)).collect();
        self.weighted_derivatives(&rho)
            .iter()
            .map(|d| -0.25 * h2 * (d.f_xx / m0 + d.f_yy / m))
            .collect()
    }

    /// `div j` per point.
    pub fn flux_divergence(&self) -> Vec<f64> {
        let j: Vec<[f64; 2]> = (0..self.points.len())
            .map(|p| {
                let (r, v) = (self.rho(p), self.velocity(p));
                [r * v[0], r * v[1]]
            })
            .collect();
        self.divergence(&j)
    }
}

/// Probability flux `j = rho v`.
pub fn flux(snap: &FieldSnapshot, cfg: &AnalysisConfig) -> [Vec<f64>; 2] {
    let mut jx = vec![f64::NAN; snap.mesh.len()];
    let mut jy = jx.clone();
    for k in snap.evaluated_points(cfg.threshold()) {
        jx[k] = snap.rho[k] * snap.vx[k];
        jy[k] = snap.rho[k] * snap.vy[k];
    }
    [jx, jy]
}

/// Osmotic velocity `u = -(hbar / 2 m_i) grad ln rho`, per axis mass.
pub fn osmotic_velocity(snap: &FieldSnapshot, phys: &PhysicalParams, cfg: &AnalysisConfig) -> Result<[Vec<f64>; 2]> {
    let frame = Frame::new(snap, cfg)?;
    let u = frame.osmotic(phys);
    Ok([
        frame.scatter(&u.iter().map(|u| u[0]).collect::<Vec<_>>()),
        frame.scatter(&u.iter().map(|u| u[1]).collect::<Vec<_>>()),
    ])
}

/// Quantum pressure `P = -(hbar^2 / 4) (rho_xx / m0 + rho_yy / m)`.
pub fn quantum_pressure(snap: &FieldSnapshot, phys: &PhysicalParams, cfg: &AnalysisConfig) -> Result<Vec<f64>> {
    let frame = Frame::new(snap, cfg)?;
    Ok(frame.scatter(&frame.pressure(phys)))
}

/// `div j`. Positive values mark density being carried away (repeller-like),
/// negative values density being collected (attractor-like).
pub fn flux_divergence(snap: &FieldSnapshot, cfg: &AnalysisConfig) -> Result<Vec<f64>> {
    let frame = Frame::new(snap, cfg)?;
    Ok(frame.scatter(&frame.flux_divergence()))
}

/// Mesh points whose lattice neighbors two steps away along both axes are
/// also evaluated; stencils there are not one-sided.
pub fn interior_points(snap: &FieldSnapshot, cfg: &AnalysisConfig) -> Vec<usize> {
    let mesh = &snap.mesh;
    let mut on = vec![false; mesh.len()];
    for k in snap.evaluated_points(cfg.threshold()) {
        on[k] = true;
    }
    let (nx, ny) = (mesh.nx as i64, mesh.ny as i64);
    (0..mesh.len())
        .filter(|&k| {
            if !on[k] {
                return false;
            }
            let (i, j) = ((k % mesh.nx) as i64, (k / mesh.nx) as i64);
            [[2, 0], [-2, 0], [0, 2], [0, -2]].iter().all(|d| {
                let (a, b) = (i + d[0], j + d[1]);
                a >= 0 && b >= 0 && a < nx && b < ny && on[(b * nx + a) as usize]
            })
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::snapshot::Source;

    /// Mesh over `[-3, 3] x [-1.5, 1.5]` with the given fields.
    pub fn synthetic(
        hx: f64,
        hy: f64,
        rho: impl Fn([f64; 2]) -> f64,
        v: impl Fn([f64; 2]) -> [f64; 2],
    ) -> FieldSnapshot {
        let nx = (6.0 / hx).round() as usize + 1;
        let ny = (3.0 / hy).round() as usize + 1;
        let mesh = Mesh {
            origin: [-3.0, -1.5],
            spacing: [hx, hy],
            nx,
            ny,
        };
        let mut snap = FieldSnapshot::empty(0.0, Source::Qtm, mesh);
        for k in 0..mesh.len() {
            let p = mesh.point_at(k);
            snap.rho[k] = rho(p);
            let [vx, vy] = v(p);
            snap.vx[k] = vx;
            snap.vy[k] = vy;
            snap.s[k] = 0.0;
        }
        snap
    }

    fn gaussian(beta: f64, alpha: f64, a: f64) -> impl Fn([f64; 2]) -> f64 {
        move |p: [f64; 2]| (-2.0 * beta * (p[0] - a).powi(2) - alpha * p[1] * p[1]).exp()
    }

    #[test]
    fn flux_is_rho_v_and_masked() {
        let snap = synthetic(0.1, 0.1, gaussian(4.5, 9.112, 0.0), |p| [p[0], -1.0]);
        let cfg = AnalysisConfig::new(1e-3);
        let [jx, jy] = flux(&snap, &cfg);
        for k in 0..snap.mesh.len() {
            if snap.rho[k] > 1e-2 {
                assert_eq!(jx[k], snap.rho[k] * snap.vx[k]);
                assert_eq!(jy[k], -snap.rho[k]);
            } else {
                assert!(jx[k].is_nan() && jy[k].is_nan());
            }
        }
        let still = synthetic(0.1, 0.1, gaussian(4.5, 9.112, 0.0), |_| [0.0, 0.0]);
        let [jx, _] = flux(&still, &cfg);
        assert!(jx.iter().all(|j| j.is_nan() || *j == 0.0));
    }

    #[test]
    fn osmotic_velocity_of_gaussians() {
        let phys = PhysicalParams::default();
        let cfg = AnalysisConfig::new(1e-12);
        let a = 0.3;
        let snap = synthetic(0.05, 0.05, gaussian(4.5, phys.bath_alpha(), a), |_| [0.0, 0.0]);
        let [ux, uy] = osmotic_velocity(&snap, &phys, &cfg).unwrap();
        let k = snap.nearest_index([a + 0.1, 0.5]).unwrap();
        let p = snap.mesh.point_at(k);
        assert!((ux[k] - 0.0045 * (p[0] - a)).abs() < 1e-12);
        assert!((uy[k] - phys.omega * p[1]).abs() < 1e-12);
        assert!((0.0045 * 0.1f64 - 4.5e-4).abs() < 1e-18);

        let flat = synthetic(0.1, 0.1, |_| 0.2, |_| [0.0, 0.0]);
        let [ux, uy] = osmotic_velocity(&flat, &phys, &cfg).unwrap();
        assert!(ux.iter().chain(&uy).all(|u| u.abs() < 1e-15));
    }

    #[test]
    fn pressure_of_a_gaussian() {
        let phys = PhysicalParams::default();
        let cfg = AnalysisConfig::new(1e-12);
        let beta = 4.5;
        // Flat along y so only the x curvature contributes.
        let snap = synthetic(0.05, 0.05, |p| 0.7 * (-2.0 * beta * p[0] * p[0]).exp(), |_| [0.0, 0.0]);
        let p = quantum_pressure(&snap, &phys, &cfg).unwrap();
        let k0 = snap.nearest_index([0.0, 0.0]).unwrap();
        assert!((p[k0] - 0.00225 * 0.7).abs() < 1e-12, "{}", p[k0]);
        let inflection = 1.0 / (2.0 * beta.sqrt());
        let inside = snap.nearest_index([inflection - 0.1, 0.0]).unwrap();
        let outside = snap.nearest_index([inflection + 0.1, 0.0]).unwrap();
        assert!(p[inside] > 0.0 && p[outside] < 0.0);

        let flat = synthetic(0.1, 0.1, |_| 0.2, |_| [0.0, 0.0]);
        assert!(quantum_pressure(&flat, &phys, &cfg)
            .unwrap()
            .iter()
            .all(|p| p.abs() < 1e-15));
    }

    #[test]
    fn pressure_next_to_a_near_node() {
        let phys = PhysicalParams::default();
        let cfg = AnalysisConfig::new(1e-12);
        let eps = 1e-3;
        // ln rho dips by ~7 at x = 0; the envelope must not be used there.
        let rho = |p: [f64; 2]| (p[0] * p[0] + eps) * (-2.0 * (p[0] * p[0] + p[1] * p[1])).exp();
        let exact = |p: [f64; 2]| {
            let (f, g) = (p[0] * p[0] + eps, (-2.0 * (p[0] * p[0] + p[1] * p[1])).exp());
            let xx = g * (2.0 - 4.0 * f - 16.0 * p[0] * p[0] + 16.0 * p[0] * p[0] * f);
            let yy = f * g * (16.0 * p[1] * p[1] - 4.0);
            -0.25 * (xx / phys.m0 + yy / phys.m)
        };
        let snap = synthetic(0.05, 0.05, rho, |_| [0.0, 0.0]);
        let p = quantum_pressure(&snap, &phys, &cfg).unwrap();
        let scale = (0..p.len())
            .map(|k| exact(snap.mesh.point_at(k)).abs())
            .fold(0.0, f64::max);
        let worst = (0..p.len())
            .filter(|&k| snap.mesh.point_at(k)[0].abs() < 1.0 && snap.mesh.point_at(k)[1].abs() < 1.0)
            .map(|k| (p[k] - exact(snap.mesh.point_at(k))).abs())
            .fold(0.0, f64::max);
        // The dip is narrower than the spacing; with the envelope forced on,
        // the error is ~300x the scale.
        assert!(worst < 1e-2 * scale, "{worst} vs {scale}");
    }

    #[test]
    fn divergence_of_uniform_and_radial_flux() {
        let cfg = AnalysisConfig::new(1e-12);
        let snap = synthetic(0.05, 0.1, |_| 0.4, |_| [0.3, -0.1]);
        let div = flux_divergence(&snap, &cfg).unwrap();
        assert!(div.iter().all(|d| d.abs() < 1e-12));
        let rho = gaussian(1.0, 2.0, 0.0);
        // v = r: div(rho r) = rho (2 + r . grad ln rho)
        let snap = synthetic(0.05, 0.1, &rho, |p| p);
        let div = flux_divergence(&snap, &cfg).unwrap();
        for &k in &interior_points(&snap, &cfg) {
            let [x, y] = snap.mesh.point_at(k);
            let exact = snap.rho[k] * (2.0 - 4.0 * x * x - 4.0 * y * y);
            assert!((div[k] - exact).abs() < 1e-10, "{} {exact}", div[k]);
        }
    }

    #[test]
    fn empty_mask_gives_all_nan() {
        let snap = synthetic(0.1, 0.1, |_| 1e-9, |_| [0.0, 0.0]);
        let cfg = AnalysisConfig::new(1e-6);
        let phys = PhysicalParams::default();
        assert!(quantum_pressure(&snap, &phys, &cfg).unwrap().iter().all(|p| p.is_nan()));
        assert!(interior_points(&snap, &cfg).is_empty());
    }
}
