use num_complex::Complex64;

use crate::error::Result;
use crate::model::PhysicalParams;
use crate::snapshot::{FieldSnapshot, Mesh};

use super::{AnalysisConfig, FieldMap, Frame};

/// Components are ordered `[00, 01, 11]`; index 0 is the system coordinate
/// `x`, index 1 the bath coordinate `y`.
pub const COMPONENTS: [(usize, usize); 3] = [(0, 0), (0, 1), (1, 1)];

/// Stress tensor and its ingredients on a snapshot mesh (NaN where masked).
///
/// With `w_i = v_i + i u_i`, the tensor is
/// `Pi_ij = P delta_ij + sqrt(m_i m_j) rho Re(w_i conj(w_j))`, split into
/// a classical part `sqrt(m_i m_j) rho v_i v_j` and a quantum part
/// `P delta_ij + sqrt(m_i m_j) rho u_i u_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StressFields {
    pub time: f64,
    pub mesh: Mesh,
    pub pressure: Vec<f64>,
    pub u: [Vec<f64>; 2],
    pub v: [Vec<f64>; 2],
    /// Compact complex-velocity form.
    pub pi: [Vec<f64>; 3],
    pub pi_classical: [Vec<f64>; 3],
    pub pi_quantum: [Vec<f64>; 3],
}

impl StressFields {
    pub fn w(&self, k: usize) -> [Complex64; 2] {
        [
            Complex64::new(self.v[0][k], self.u[0][k]),
            Complex64::new(self.v[1][k], self.u[1][k]),
        ]
    }

    pub fn w_magnitude(&self) -> Vec<f64> {
        (0..self.mesh.len())
            .map(|k| {
                let [a, b] = self.w(k);
                (a.norm_sqr() + b.norm_sqr()).sqrt()
            })
            .collect()
    }

    /// Largest relative gap between the compact form and the sum of the
    /// classical and quantum parts.
    pub fn identity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for c in 0..3 {
            for k in 0..self.mesh.len() {
                let compact = self.pi[c][k];
                if compact.is_nan() {
                    continue;
                }
                let sum = self.pi_classical[c][k] + self.pi_quantum[c][k];
                let p = if c == 1 { 0.0 } else { self.pressure[k] };
                let scale = self.pi_classical[c][k].abs() + (self.pi_quantum[c][k] - p).abs() + p.abs();
                if scale > 0.0 {
                    worst = worst.max((compact - sum).abs() / scale);
                }
            }
        }
        worst
    }

    /// Largest value of a component over evaluated points.
    pub fn mesh_max(field: &[f64]) -> f64 {
        field
            .iter()
            .filter(|v| !v.is_nan())
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }

    /// The classical and osmotic diagonal terms `m_i rho v_i^2` and
    /// `m_i rho u_i^2` for axis `i`.
    pub fn diagonal_terms(&self, axis: usize) -> (&[f64], Vec<f64>) {
        let c = if axis == 0 { 0 } else { 2 };
        let osmotic = (0..self.mesh.len())
            .map(|k| self.pi_quantum[c][k] - self.pressure[k])
            .collect();
        (&self.pi_classical[c], osmotic)
    }

    pub fn to_field_map(&self, snap: &FieldSnapshot) -> FieldMap {
        let mut map = FieldMap::new(self.time, snap.source, self.mesh);
        map.push("P", self.pressure.clone());
        map.push("ux", self.u[0].clone());
        map.push("uy", self.u[1].clone());
        map.push("w_abs", self.w_magnitude());
        for (c, (i, j)) in COMPONENTS.iter().enumerate() {
            map.push(&format!("Pi_{i}{j}"), self.pi[c].clone());
        }
        for (c, (i, j)) in COMPONENTS.iter().enumerate() {
            map.push(&format!("Pi_c_{i}{j}"), self.pi_classical[c].clone());
        }
        for (c, (i, j)) in COMPONENTS.iter().enumerate() {
            map.push(&format!("Pi_q_{i}{j}"), self.pi_quantum[c].clone());
        }
        map
    }
}

/// Per-point stress from a prepared frame, in frame order.
pub(crate) struct PointStress {
    pub pi: Vec<[f64; 3]>,
    pub pi_classical: Vec<[f64; 3]>,
    pub pi_quantum: Vec<[f64; 3]>,
    pub pressure: Vec<f64>,
    pub u: Vec<[f64; 2]>,
}

pub(crate) fn point_stress(frame: &Frame, phys: &PhysicalParams) -> PointStress {
    let masses = phys.masses();
    let pressure = frame.pressure(phys);
    let u = frame.osmotic(phys);
    let n = frame.points.len();
    let mut out = PointStress {
        pi: Vec::with_capacity(n),
        pi_classical: Vec::with_capacity(n),
        pi_quantum: Vec::with_capacity(n),
        pressure,
        u,
    };
    for p in 0..n {
        let rho = frame.rho(p);
        let v = frame.velocity(p);
        let u = out.u[p];
        let w = [Complex64::new(v[0], u[0]), Complex64::new(v[1], u[1])];
        let mut pi = [0.0; 3];
        let mut pc = [0.0; 3];
        let mut pq = [0.0; 3];
        for (c, &(i, j)) in COMPONENTS.iter().enumerate() {
            let mass = (masses[i] * masses[j]).sqrt();
            let delta = if i == j { out.pressure[p] } else { 0.0 };
            pi[c] = delta + mass * rho * (w[i] * w[j].conj()).re;
            pc[c] = mass * rho * v[i] * v[j];
            pq[c] = delta + mass * rho * u[i] * u[j];
        }
        out.pi.push(pi);
        out.pi_classical.push(pc);
        out.pi_quantum.push(pq);
    }
    out
}

/// Quantum pressure, osmotic velocity and the full stress tensor, in both
/// the compact and the decomposed forms.
pub fn stress_tensor(snap: &FieldSnapshot, phys: &PhysicalParams, cfg: &AnalysisConfig) -> Result<StressFields> {
    let frame = Frame::new(snap, cfg)?;
    let s = point_stress(&frame, phys);
    let comp = |rows: &[[f64; 3]], c: usize| frame.scatter(&rows.iter().map(|r| r[c]).collect::<Vec<_>>());
    let axis = |rows: &[[f64; 2]], d: usize| frame.scatter(&rows.iter().map(|r| r[d]).collect::<Vec<_>>());
    let v: Vec<[f64; 2]> = (0..frame.points.len()).map(|p| frame.velocity(p)).collect();
    Ok(StressFields {
        time: snap.time,
        mesh: snap.mesh,
        pressure: frame.scatter(&s.pressure),
        u: [axis(&s.u, 0), axis(&s.u, 1)],
        v: [axis(&v, 0), axis(&v, 1)],
        pi: [comp(&s.pi, 0), comp(&s.pi, 1), comp(&s.pi, 2)],
        pi_classical: [
            comp(&s.pi_classical, 0),
            comp(&s.pi_classical, 1),
            comp(&s.pi_classical, 2),
        ],
        pi_quantum: [comp(&s.pi_quantum, 0), comp(&s.pi_quantum, 1), comp(&s.pi_quantum, 2)],
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::synthetic;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn static_state_has_only_pressure_and_osmotic_terms() {
        let phys = PhysicalParams::default();
        let cfg = AnalysisConfig::new(1e-12);
        let snap = synthetic(
            0.05,
            0.05,
            |p| (-9.0 * p[0] * p[0] - 9.0 * p[1] * p[1]).exp(),
            |_| [0.0, 0.0],
        );
        let s = stress_tensor(&snap, &phys, &cfg).unwrap();
        let m = phys.m;
        for k in 0..snap.mesh.len() {
            if s.pi[0][k].is_nan() {
                continue;
            }
            assert_eq!(s.pi_classical[1][k], 0.0);
            let expected = m * snap.rho[k] * s.u[0][k] * s.u[1][k];
            assert!((s.pi[1][k] - expected).abs() <= 1e-15 * expected.abs().max(1e-300));
        }
        // At the peak u vanishes and only the pressure remains on the diagonal.
        let k0 = snap.nearest_index([0.0, 0.0]).unwrap();
        assert!(s.u[0][k0].abs() < 1e-14);
        assert!((s.pi[0][k0] - s.pressure[k0]).abs() < 1e-15);
        assert!(s.pi[1][k0].abs() < 1e-20);
    }

    proptest! {
        #[test]
        fn compact_form_matches_decomposition(
            vx in -1e-2f64..1e-2, vy in -1e-2f64..1e-2,
            gx in -3.0f64..3.0, gy in -3.0f64..3.0,
            m0 in 500.0f64..4000.0,
        ) {
            let phys = PhysicalParams { m0, ..PhysicalParams::default() };
            let cfg = AnalysisConfig::new(1e-12);
            let snap = synthetic(
                0.1, 0.1,
                |p| (-p[0] * p[0] - 2.0 * p[1] * p[1] + gx * p[0] + gy * p[1]).exp(),
                |p| [vx * (1.0 + p[1]), vy - 0.5 * vx * p[0]],
            );
            let s = stress_tensor(&snap, &phys, &cfg).unwrap();
            prop_assert!(s.identity_error() < 1e-12);
        }
    }
}
