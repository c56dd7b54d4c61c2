use crate::error::{Error, Result};
use crate::model::{potential_gradient, Case, PhysicalParams};
use crate::snapshot::{FieldSnapshot, Mesh};

use super::stress::point_stress;
use super::{interior_points, AnalysisConfig, FieldMap, Frame};

/// How the momentum-density time derivative is paired with the spatial terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeDifference {
    /// Spatial terms at the earlier snapshot; first order in the interval.
    Forward,
    /// Spatial terms averaged over both snapshots; second order, centered
    /// on the midpoint.
    #[default]
    Centered,
}

/// `d(rho m_i v_i)/dt + sum_j d_j Pi_ji + rho d_i V` on the earlier
/// snapshot's mesh, with the three terms kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct NsResidual {
    /// Time the residual refers to (the midpoint when centered).
    pub time: f64,
    pub mesh: Mesh,
    /// Density used as the weight in norms.
    pub rho: Vec<f64>,
    pub residual: [Vec<f64>; 2],
    pub time_term: [Vec<f64>; 2],
    pub stress_term: [Vec<f64>; 2],
    pub force_term: [Vec<f64>; 2],
}

fn weighted_norm(rho: &[f64], field: &[Vec<f64>; 2], points: &[usize]) -> f64 {
    points
        .iter()
        .map(|&k| rho[k] * (field[0][k].powi(2) + field[1][k].powi(2)))
        .sum::<f64>()
        .sqrt()
}

impl NsResidual {
    /// Mesh indices where the residual was evaluated.
    pub fn evaluated(&self) -> Vec<usize> {
        (0..self.mesh.len())
            .filter(|&k| !self.residual[0][k].is_nan())
            .collect()
    }

    /// Density-weighted norm of the residual over `points`, relative to the
    /// largest of the three terms' norms.
    pub fn relative(&self, points: &[usize]) -> f64 {
        let points: Vec<usize> = points
            .iter()
            .copied()
            .filter(|&k| !self.residual[0][k].is_nan())
            .collect();
        let scale = [&self.time_term, &self.stress_term, &self.force_term]
            .iter()
            .map(|t| weighted_norm(&self.rho, t, &points))
            .fold(0.0, f64::max);
        let r = weighted_norm(&self.rho, &self.residual, &points);
        if scale > 0.0 {
            r / scale
        } else {
            r
        }
    }

    pub fn to_field_map(&self, snap: &FieldSnapshot) -> FieldMap {
        let mut map = FieldMap::new(self.time, snap.source, self.mesh);
        for (name, field) in [
            ("res", &self.residual),
            ("dt_mom", &self.time_term),
            ("div_pi", &self.stress_term),
            ("rho_gradV", &self.force_term),
        ] {
            map.push(&format!("{name}_x"), field[0].clone());
            map.push(&format!("{name}_y"), field[1].clone());
        }
        map
    }
}

/// Maps each point of `later`'s mesh onto `earlier`'s mesh. The meshes must
/// share spacings and lie on a common lattice.
fn lattice_map(earlier: &Mesh, later: &Mesh) -> Result<Vec<Option<usize>>> {
    let mut offset = [0i64; 2];
    for d in 0..2 {
        let h = earlier.spacing[d];
        if (later.spacing[d] - h).abs() > 1e-9 * h {
            return Err(Error::Alignment(format!(
                "mesh spacings differ: {:?} vs {:?}",
                earlier.spacing, later.spacing
            )));
        }
        let shift = (later.origin[d] - earlier.origin[d]) / h;
        if (shift - shift.round()).abs() > 1e-6 {
            return Err(Error::Alignment(format!(
                "mesh origins {:?} and {:?} are not on a common lattice",
                earlier.origin, later.origin
            )));
        }
        offset[d] = shift.round() as i64;
    }
    Ok((0..later.len())
        .map(|k| {
            let i = (k % later.nx) as i64 + offset[0];
            let j = (k / later.nx) as i64 + offset[1];
            (i >= 0 && j >= 0 && i < earlier.nx as i64 && j < earlier.ny as i64)
                .then(|| earlier.index(i as usize, j as usize))
        })
        .collect())
}

fn interval(earlier: &FieldSnapshot, later: &FieldSnapshot) -> Result<f64> {
    let dt = later.time - earlier.time;
    if !(dt > 0.0) {
        return Err(Error::Alignment(format!(
            "snapshots must be in time order, got {} then {}",
            earlier.time, later.time
        )));
    }
    Ok(dt)
}

/// Per-point stress divergence plus force density, and momentum density,
/// scattered onto the snapshot's own mesh.
struct Balance {
    momentum: [Vec<f64>; 2],
    stress: [Vec<f64>; 2],
    force: [Vec<f64>; 2],
}

fn balance(snap: &FieldSnapshot, phys: &PhysicalParams, case: Case, cfg: &AnalysisConfig) -> Result<Balance> {
    let frame = Frame::new(snap, cfg)?;
    let s = point_stress(&frame, phys);
    let masses = phys.masses();
    let n = frame.points.len();
    // Row i of the symmetric tensor, (Pi_i0, Pi_i1).
    let row = |i: usize| -> Vec<[f64; 2]> {
        s.pi.iter()
            .map(|pi| if i == 0 { [pi[0], pi[1]] } else { [pi[1], pi[2]] })
            .collect()
    };
    let div0 = frame.divergence(&row(0));
    let div1 = frame.divergence(&row(1));
    let mut mom = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut force = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for p in 0..n {
        let rho = frame.rho(p);
        let v = frame.velocity(p);
        let f = potential_gradient(phys, case, frame.position(p));
        for d in 0..2 {
            mom[d].push(rho * masses[d] * v[d]);
            // potential_gradient returns -grad V.
            force[d].push(-rho * f[d]);
        }
    }
    Ok(Balance {
        momentum: [frame.scatter(&mom[0]), frame.scatter(&mom[1])],
        stress: [frame.scatter(&div0), frame.scatter(&div1)],
        force: [frame.scatter(&force[0]), frame.scatter(&force[1])],
    })
}

/// Momentum-balance residual between two snapshots one interval apart.
/// Evaluated where both snapshots are evaluated, on `earlier`'s mesh.
pub fn ns_residual(
    earlier: &FieldSnapshot,
    later: &FieldSnapshot,
    phys: &PhysicalParams,
    case: Case,
    cfg: &AnalysisConfig,
    scheme: TimeDifference,
) -> Result<NsResidual> {
    let dt = interval(earlier, later)?;
    let map = lattice_map(&earlier.mesh, &later.mesh)?;
    let a = balance(earlier, phys, case, cfg)?;
    let b = balance(later, phys, case, cfg)?;
    let n = earlier.mesh.len();
    let nan = || [vec![f64::NAN; n], vec![f64::NAN; n]];
    let (mut res, mut tt, mut st, mut ft) = (nan(), nan(), nan(), nan());
    for (kb, ka) in map.iter().enumerate() {
        let Some(ka) = *ka else { continue };
        if a.momentum[0][ka].is_nan() || b.momentum[0][kb].is_nan() {
            continue;
        }
        for d in 0..2 {
            let time = (b.momentum[d][kb] - a.momentum[d][ka]) / dt;
            let (stress, force) = match scheme {
                TimeDifference::Forward => (a.stress[d][ka], a.force[d][ka]),
                TimeDifference::Centered => (
                    0.5 * (a.stress[d][ka] + b.stress[d][kb]),
                    0.5 * (a.force[d][ka] + b.force[d][kb]),
                ),
            };
            tt[d][ka] = time;
            st[d][ka] = stress;
            ft[d][ka] = force;
            res[d][ka] = time + stress + force;
        }
    }
    Ok(NsResidual {
        time: match scheme {
            TimeDifference::Forward => earlier.time,
            TimeDifference::Centered => 0.5 * (earlier.time + later.time),
        },
        mesh: earlier.mesh,
        rho: earlier.rho.clone(),
        residual: res,
        time_term: tt,
        stress_term: st,
        force_term: ft,
    })
}

/// Density-weighted relative gap between the midpoint average of `div j`
/// and `-(rho_later - rho_earlier) / dt`, over interior points of `earlier`.
pub fn continuity_mismatch(earlier: &FieldSnapshot, later: &FieldSnapshot, cfg: &AnalysisConfig) -> Result<f64> {
    let dt = interval(earlier, later)?;
    let map = lattice_map(&earlier.mesh, &later.mesh)?;
    let mut back = vec![None; earlier.mesh.len()];
    for (kb, ka) in map.iter().enumerate() {
        if let Some(ka) = ka {
            back[*ka] = Some(kb);
        }
    }
    let da = Frame::new(earlier, cfg)?;
    let db = Frame::new(later, cfg)?;
    let (div_a, div_b) = (da.scatter(&da.flux_divergence()), db.scatter(&db.flux_divergence()));
    let (mut num, mut den) = (0.0, 0.0);
    for ka in interior_points(earlier, cfg) {
        let Some(kb) = back[ka] else { continue };
        if div_a[ka].is_nan() || div_b[kb].is_nan() {
            continue;
        }
        let w = earlier.rho[ka];
        let rate = -(later.rho[kb] - earlier.rho[ka]) / dt;
        let div = 0.5 * (div_a[ka] + div_b[kb]);
        num += w * (div - rate).powi(2);
        den += w * rate * rate;
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::super::tests::synthetic;
    use super::*;
    use crate::model::bath_ground_state;
    use crate::oracle::analytic_free_gaussian;

    /// Free spreading Gaussian in x times the bath ground state in y.
    fn spreading(phys: &PhysicalParams, t: f64, hx: f64, hy: f64) -> FieldSnapshot {
        let m0 = phys.m0;
        let mut snap = synthetic(
            hx,
            hy,
            |p| analytic_free_gaussian(4.5, m0, 1.0, 0.0, t, p[0]).0 * bath_ground_state(phys, p[1]).powi(2),
            |p| [analytic_free_gaussian(4.5, m0, 1.0, 0.0, t, p[0]).1, 0.0],
        );
        snap.time = t;
        snap
    }

    #[test]
    fn stationary_state_balances_exactly() {
        let phys = PhysicalParams::default();
        let cfg = AnalysisConfig::new(1e-10);
        // Ground state of the bath well, flat along x.
        let mut a = synthetic(0.1, 0.05, |p| bath_ground_state(&phys, p[1]).powi(2), |_| [0.0, 0.0]);
        let mut b = a.clone();
        a.time = 10.0;
        b.time = 12.0;
        for scheme in [TimeDifference::Forward, TimeDifference::Centered] {
            let r = ns_residual(&a, &b, &phys, Case::Uncoupled, &cfg, scheme).unwrap();
            let rel = r.relative(&r.evaluated());
            assert!(rel < 1e-6, "{rel}");
        }
    }

    #[test]
    fn spreading_gaussian_is_consistent_and_forward_error_is_first_order() {
        let phys = PhysicalParams::default();
        let cfg = AnalysisConfig::new(1e-8);
        let t0 = 200.0;
        let base = spreading(&phys, t0, 0.05, 0.05);
        let rel = |dt: f64, scheme| {
            let later = spreading(&phys, t0 + dt, 0.05, 0.05);
            let r = ns_residual(&base, &later, &phys, Case::Uncoupled, &cfg, scheme).unwrap();
            r.relative(&interior_points(&base, &cfg))
        };
        let (f2, f4) = (rel(2.0, TimeDifference::Forward), rel(4.0, TimeDifference::Forward));
        assert!((f4 / f2 - 2.0).abs() < 0.2, "{f2} {f4}");
        let c2 = rel(2.0, TimeDifference::Centered);
        assert!(c2 < 0.1 * f2, "{c2} {f2}");

        let later = spreading(&phys, t0 + 2.0, 0.05, 0.05);
        let m = continuity_mismatch(&base, &later, &cfg).unwrap();
        assert!(m < 0.01, "{m}");
    }

    /// Two freely spreading Gaussians at `x = -+0.8` times the bath ground
    /// state: an exact solution with interference fringes.
    fn interfering(phys: &PhysicalParams, t: f64, hx: f64, hy: f64) -> FieldSnapshot {
        use num_complex::Complex64;
        let s0 = 1.0 / (4.0 * 4.5);
        let z = Complex64::new(1.0, phys.hbar * t / (2.0 * phys.m0 * s0));
        let psi = |x: f64| -> (Complex64, Complex64) {
            let mut v = Complex64::new(0.0, 0.0);
            let mut d = v;
            for c in [0.8, -0.8] {
                let g = (-(x - c) * (x - c) / (4.0 * s0 * z)).exp() / z.sqrt();
                v += g;
                d += g * (-(x - c) / (2.0 * s0 * z));
            }
            (v, d)
        };
        let mut snap = synthetic(
            hx,
            hy,
            |p| psi(p[0]).0.norm_sqr() * bath_ground_state(phys, p[1]).powi(2),
            |p| {
                let (v, d) = psi(p[0]);
                [phys.hbar / phys.m0 * (d / v).im, 0.0]
            },
        );
        snap.time = t;
        snap
    }

    #[test]
    fn interference_fringes_balance() {
        let phys = PhysicalParams::default();
        let cfg = AnalysisConfig::new(1e-8);
        // Reference grid spacing and the uncoupled engine lattice. The
        // coupled lattice (about 0.11 square) leaves ~7 points per fringe
        // and does not resolve the balance even for exact fields.
        for (hx, hy, tol) in [(0.047, 0.0234, 0.01), (0.039, 0.31, 0.01)] {
            let a = interfering(&phys, 400.0, hx, hy);
            let b = interfering(&phys, 402.0, hx, hy);
            let r = ns_residual(&a, &b, &phys, Case::Uncoupled, &cfg, TimeDifference::Centered).unwrap();
            let rel = r.relative(&interior_points(&a, &cfg));
            let c = continuity_mismatch(&a, &b, &cfg).unwrap();
            assert!(rel < tol, "{hx} x {hy}: {rel}");
            assert!(c < 1e-3, "{hx} x {hy}: {c}");
        }
    }

    #[test]
    fn misaligned_meshes_are_rejected() {
        let phys = PhysicalParams::default();
        let cfg = AnalysisConfig::new(1e-8);
        let a = spreading(&phys, 0.0, 0.1, 0.1);
        let mut b = spreading(&phys, 2.0, 0.1, 0.1);
        b.mesh.origin[0] += 0.03;
        let err = ns_residual(&a, &b, &phys, Case::Uncoupled, &cfg, TimeDifference::Centered).unwrap_err();
        assert!(matches!(err, Error::Alignment(_)));
        let c = spreading(&phys, 2.0, 0.05, 0.1);
        assert!(matches!(continuity_mismatch(&a, &c, &cfg), Err(Error::Alignment(_))));
        assert!(matches!(continuity_mismatch(&a, &a, &cfg), Err(Error::Alignment(_))));
    }
}
