use serde::{Deserialize, Serialize};

use crate::snapshot::{bilinear, FieldSnapshot, Source};

use super::AnalysisConfig;

/// Half-width of the window on the `y = 0` cut used for fringe visibility.
pub const VISIBILITY_WINDOW: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceMetrics {
    pub time: f64,
    /// `rho(0, 0)`.
    pub central_density: f64,
    /// `(max - min) / (max + min)` of `rho` along `y = 0`, `|x| < 0.5`.
    pub fringe_visibility: f64,
    /// Distance between the two highest local maxima of `rho`.
    pub lobe_separation: f64,
}

fn sample(snap: &FieldSnapshot, p: [f64; 2]) -> Option<f64> {
    bilinear(&snap.mesh, &snap.rho, p, snap.source == Source::Oracle)
}

/// Local maxima of `rho` over the 8-neighborhood, highest first. Ties
/// between neighbors go to the lower index.
fn local_maxima(snap: &FieldSnapshot) -> Vec<usize> {
    let m = &snap.mesh;
    let (nx, ny) = (m.nx as i64, m.ny as i64);
    let mut peaks: Vec<usize> = (0..m.len())
        .filter(|&k| {
            let r = snap.rho[k];
            if !(r > 0.0) {
                return false;
            }
            let (i, j) = ((k % m.nx) as i64, (k / m.nx) as i64);
            (-1..=1).all(|dj| {
                (-1..=1).all(|di| {
                    let (a, b) = (i + di, j + dj);
                    if (di == 0 && dj == 0) || a < 0 || b < 0 || a >= nx || b >= ny {
                        return true;
                    }
                    let n = (b * nx + a) as usize;
                    if n < k {
                        r > snap.rho[n]
                    } else {
                        r >= snap.rho[n]
                    }
                })
            })
        })
        .collect();
    peaks.sort_by(|&a, &b| snap.rho[b].total_cmp(&snap.rho[a]).then(a.cmp(&b)));
    peaks
}

pub fn decoherence_metrics(snap: &FieldSnapshot) -> DecoherenceMetrics {
    let m = &snap.mesh;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..m.nx {
        let x = m.origin[0] + i as f64 * m.spacing[0];
        if x.abs() >= VISIBILITY_WINDOW {
            continue;
        }
        if let Some(r) = sample(snap, [x, 0.0]) {
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    let fringe_visibility = if hi > 0.0 && lo.is_finite() {
        (hi - lo) / (hi + lo)
    } else {
        0.0
    };
    let peaks = local_maxima(snap);
    let lobe_separation = match peaks.as_slice() {
        [a, b, ..] => {
            let (p, q) = (m.point_at(*a), m.point_at(*b));
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
        }
        _ => 0.0,
    };
    DecoherenceMetrics {
        time: snap.time,
        central_density: sample(snap, [0.0, 0.0]).unwrap_or(0.0),
        fringe_visibility,
        lobe_separation,
    }
}

/// Fraction of evaluated points with `0 < |x| < half_width` whose flux
/// `j_x` points toward `x = 0`, and the number of such points.
pub fn flux_band_fraction(snap: &FieldSnapshot, cfg: &AnalysisConfig, half_width: f64) -> (f64, usize) {
    let mut inward = 0;
    let mut total = 0;
    for k in snap.evaluated_points(cfg.threshold()) {
        let x = snap.mesh.point_at(k)[0];
        if x.abs() >= half_width || x.abs() < 1e-12 {
            continue;
        }
        total += 1;
        if snap.rho[k] * snap.vx[k] * x < 0.0 {
            inward += 1;
        }
    }
    (if total > 0 { inward as f64 / total as f64 } else { 0.0 }, total)
}

#[cfg(test)]
mod tests {
    use super::super::tests::synthetic;
    use super::*;
    use crate::model::{initial_wavefunction, PhysicalParams, SuperpositionParams};

    #[test]
    fn initial_superposition_metrics() {
        let phys = PhysicalParams::default();
        let sup = SuperpositionParams::default();
        let snap = synthetic(
            0.05,
            0.05,
            |p| initial_wavefunction(&phys, &sup, p).0.powi(2),
            |_| [0.0, 0.0],
        );
        let m = decoherence_metrics(&snap);
        let center = initial_wavefunction(&phys, &sup, [0.0, 0.0]).0.powi(2);
        assert!((m.central_density - center).abs() < 1e-15);
        // Overlap at the origin is suppressed by 4 exp(-2 beta a^2) relative to a lobe.
        let ratio = 4.0 * (-2.0 * sup.beta * sup.a * sup.a).exp();
        assert!((m.central_density / snap.peak_density() / ratio - 1.0).abs() < 0.01);
        assert!(m.fringe_visibility > 0.9 && m.fringe_visibility <= 1.0);
        assert!((m.lobe_separation - 1.6).abs() < 0.051, "{}", m.lobe_separation);
    }

    #[test]
    fn flat_cut_has_zero_visibility() {
        let snap = synthetic(0.1, 0.1, |p| (-p[1] * p[1]).exp(), |_| [0.0, 0.0]);
        let m = decoherence_metrics(&snap);
        assert!(m.fringe_visibility.abs() < 1e-15);
    }

    #[test]
    fn band_fraction_counts_inward_flux() {
        let cfg = AnalysisConfig::new(1e-6);
        let snap = synthetic(0.05, 0.1, |_| 1.0, |p| [-p[0], 0.0]);
        let (f, n) = flux_band_fraction(&snap, &cfg, 0.3);
        assert_eq!(f, 1.0);
        assert!(n > 0);
        let snap = synthetic(0.05, 0.1, |_| 1.0, |p| [p[0], 0.0]);
        assert_eq!(flux_band_fraction(&snap, &cfg, 0.3).0, 0.0);
    }
}
