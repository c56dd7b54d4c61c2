//! Passive elements that follow selected lineages through every regrid, and
//! wavefunction synthesis along them.

use num_complex::Complex64;

use crate::error::{Error, Result};

use super::ensemble::FluidElement;

/// A fluid element carried by the interpolated flow instead of being
/// replaced at each regrid. Its integrals run continuously from `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tracer {
    pub element: FluidElement,
    pub origin: [f64; 2],
    /// Wavefunction at the origin at `t = 0`.
    pub psi0: Complex64,
}

impl Tracer {
    pub fn from_element(e: &FluidElement, hbar: f64) -> Self {
        Self {
            element: *e,
            origin: e.position,
            psi0: Complex64::from_polar((0.5 * e.log_density).exp(), e.action / hbar),
        }
    }

    pub fn id(&self) -> u64 {
        self.element.id
    }

    /// The single synthesis segment covering the whole history.
    pub fn segment(&self, t: f64) -> SynthesisSegment {
        SynthesisSegment {
            t_start: 0.0,
            t_end: t,
            amp_integral: self.element.amp_integral,
            phase_integral: self.element.phase_integral,
        }
    }
}

/// Evenly spaced picks from the initial elements, in element order.
pub fn select_tracers(elements: &[FluidElement], count: usize, hbar: f64) -> Vec<Tracer> {
    let n = elements.len();
    let count = count.min(n);
    (0..count)
        .map(|k| {
            let i = (k * n + n / 2) / count;
            Tracer::from_element(&elements[i.min(n - 1)], hbar)
        })
        .collect()
}

/// One row of the trajectory output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub time: f64,
    pub id: u64,
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub rho: f64,
    pub action: f64,
    pub q: f64,
    pub lq: f64,
}

/// Integrals accumulated along one piece of a lineage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub amp_integral: f64,
    pub phase_integral: f64,
}

/// `Psi(r, t) = exp(-A / 2) exp(i Phi / hbar) Psi(r0, t0)`, with `A` and
/// `Phi` summed over contiguous segments.
pub fn synthesize_wavefunction(psi0: Complex64, segments: &[SynthesisSegment], hbar: f64) -> Result<Complex64> {
    let mut amp = 0.0;
    let mut phase = 0.0;
    let mut previous: Option<f64> = None;
    for (k, seg) in segments.iter().enumerate() {
        if !(seg.t_end >= seg.t_start) {
            return Err(Error::Lineage(format!(
                "segment {k} runs backwards ({} -> {})",
                seg.t_start, seg.t_end
            )));
        }
        if let Some(end) = previous {
            if (seg.t_start - end).abs() > 1e-9 * end.abs().max(1.0) {
                return Err(Error::Lineage(format!(
                    "gap in lineage record: segment {k} starts at {} but the previous one ends at {end}",
                    seg.t_start
                )));
            }
        }
        previous = Some(seg.t_end);
        amp += seg.amp_integral;
        phase += seg.phase_integral;
    }
    Ok(psi0 * Complex64::from_polar((-0.5 * amp).exp(), phase / hbar))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(t0: f64, t1: f64, a: f64, p: f64) -> SynthesisSegment {
        SynthesisSegment {
            t_start: t0,
            t_end: t1,
            amp_integral: a,
            phase_integral: p,
        }
    }

    #[test]
    fn empty_record_leaves_psi_unchanged() {
        let psi0 = Complex64::new(0.3, -0.2);
        assert_eq!(synthesize_wavefunction(psi0, &[], 1.0).unwrap(), psi0);
        assert_eq!(
            synthesize_wavefunction(psi0, &[seg(0.0, 0.0, 0.0, 0.0)], 1.0).unwrap(),
            psi0
        );
    }

    #[test]
    fn segments_compose() {
        let psi0 = Complex64::new(0.5, 0.0);
        let whole = synthesize_wavefunction(psi0, &[seg(0.0, 4.0, 0.4, 1.0)], 1.0).unwrap();
        let split = synthesize_wavefunction(psi0, &[seg(0.0, 2.0, 0.1, 0.25), seg(2.0, 4.0, 0.3, 0.75)], 1.0).unwrap();
        assert!((whole - split).norm() < 1e-15);
        assert!((whole.norm_sqr() - 0.25 * (-0.4f64).exp()).abs() < 1e-15);
        assert!((whole.arg() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gaps_are_lineage_errors() {
        let err = synthesize_wavefunction(
            Complex64::new(1.0, 0.0),
            &[seg(0.0, 2.0, 0.0, 0.0), seg(4.0, 6.0, 0.0, 0.0)],
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Lineage(_)));
    }

    #[test]
    fn selection_is_even_and_bounded() {
        let elements: Vec<FluidElement> = (0..1000)
            .map(|i| FluidElement {
                id: i,
                position: [i as f64, 0.0],
                velocity: [0.0; 2],
                log_density: -1.0,
                action: 0.0,
                amp_integral: 0.0,
                phase_integral: 0.0,
            })
            .collect();
        let t = select_tracers(&elements, 200, 1.0);
        assert_eq!(t.len(), 200);
        assert_eq!(t[0].id(), 2);
        assert_eq!(t[199].id(), 997);
        assert!((t[0].psi0.norm_sqr() - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(select_tracers(&elements[..10], 200, 1.0).len(), 10);
    }
}
