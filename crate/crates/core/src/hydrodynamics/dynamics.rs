use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{potential, potential_gradient, Case, PhysicalParams};
use crate::mwls::{MwlsConfig, ScaledCloud};

use super::ensemble::{Ensemble, FluidElement, HydroConfig};

/// Per-element quantities driving the equations of motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementDerivatives {
    /// Quantum potential.
    pub q: f64,
    pub grad_q: [f64; 2],
    pub div_v: f64,
    /// Quantum Lagrangian `m v^2 / 2 - (V + Q)`.
    pub lq: f64,
    /// Classical force `-grad V`.
    pub force: [f64; 2],
}

/// Flow quantities interpolated at a tracer position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct TracerRates {
    pub velocity: [f64; 2],
    pub div_v: f64,
    pub q: f64,
    pub lq: f64,
}

pub(crate) struct Stage {
    pub elements: Vec<ElementDerivatives>,
    pub tracers: Vec<TracerRates>,
}

impl Stage {
    pub fn empty() -> Self {
        Self {
            elements: Vec::new(),
            tracers: Vec::new(),
        }
    }
}

fn relabel(err: Error, ids: &[u64]) -> Error {
    match err {
        Error::DegenerateGeometry { index, target, reason } => Error::DegenerateGeometry {
            index: ids.get(index).map_or(index, |&id| id as usize),
            target,
            reason,
        },
        other => other,
    }
}

fn lagrangian(phys: &PhysicalParams, case: Case, p: [f64; 2], v: [f64; 2], q: f64) -> f64 {
    0.5 * (phys.m0 * v[0] * v[0] + phys.m * v[1] * v[1]) - (potential(phys, case, p) + q)
}

/// Evaluates all MWLS-derived fields for elements at `elements` (and
/// interpolated rates at `tracer_positions`).
pub(crate) fn evaluate(
    elements: &[FluidElement],
    tracer_positions: &[[f64; 2]],
    scale: [f64; 2],
    phys: &PhysicalParams,
    case: Case,
    mwls: &MwlsConfig,
) -> Result<Stage> {
    let ids: Vec<u64> = elements.iter().map(|e| e.id).collect();
    let positions: Vec<[f64; 2]> = elements.iter().map(|e| e.position).collect();
    let cloud = ScaledCloud::new(&positions, scale).map_err(|e| relabel(e, &ids))?;
    let stencils = cloud.stencils_at_cloud(mwls).map_err(|e| relabel(e, &ids))?;

    let half_log: Vec<f64> = elements.iter().map(|e| 0.5 * e.log_density).collect();
    let vx: Vec<f64> = elements.iter().map(|e| e.velocity[0]).collect();
    let vy: Vec<f64> = elements.iter().map(|e| e.velocity[1]).collect();
    let hbar2 = phys.hbar * phys.hbar;

    let c = stencils.derivatives(&half_log);
    let q: Vec<f64> = c
        .iter()
        .map(|d| -0.5 * hbar2 * ((d.f_xx + d.f_x * d.f_x) / phys.m0 + (d.f_yy + d.f_y * d.f_y) / phys.m))
        .collect();
    let grad_q = stencils.gradients(&q);
    let gvx = stencils.gradients(&vx);
    let gvy = stencils.gradients(&vy);

    let derivs: Vec<ElementDerivatives> = elements
        .par_iter()
        .enumerate()
        .map(|(i, e)| ElementDerivatives {
            q: q[i],
            grad_q: grad_q[i],
            div_v: gvx[i][0] + gvy[i][1],
            lq: lagrangian(phys, case, e.position, e.velocity, q[i]),
            force: potential_gradient(phys, case, e.position),
        })
        .collect();

    let tracers = if tracer_positions.is_empty() {
        Vec::new()
    } else {
        let at = cloud.stencils_at(tracer_positions, mwls)?;
        let tvx = at.values(&vx);
        let tvy = at.values(&vy);
        let tq = at.values(&q);
        let tgx = at.gradients(&vx);
        let tgy = at.gradients(&vy);
        tracer_positions
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let v = [tvx[k], tvy[k]];
                TracerRates {
                    velocity: v,
                    div_v: tgx[k][0] + tgy[k][1],
                    q: tq[k],
                    lq: lagrangian(phys, case, p, v, tq[k]),
                }
            })
            .collect()
    };
    Ok(Stage {
        elements: derivs,
        tracers,
    })
}

/// `Q`, `grad Q`, `div v`, `L_q` and the classical force at every element.
pub fn hydrodynamic_derivatives(
    ensemble: &Ensemble,
    phys: &PhysicalParams,
    case: Case,
    mwls: &MwlsConfig,
) -> Result<Vec<ElementDerivatives>> {
    mwls.validate()?;
    Ok(evaluate(&ensemble.elements, &[], ensemble.coordinate_scale(), phys, case, mwls)?.elements)
}

pub(crate) fn stage_for(ensemble: &Ensemble, phys: &PhysicalParams, case: Case, mwls: &MwlsConfig) -> Result<Stage> {
    let tp: Vec<[f64; 2]> = ensemble.tracers.iter().map(|t| t.element.position).collect();
    evaluate(&ensemble.elements, &tp, ensemble.coordinate_scale(), phys, case, mwls)
}

#[derive(Clone, Copy)]
struct Rate {
    dx: [f64; 2],
    dv: [f64; 2],
    div: f64,
    lq: f64,
}

fn element_rate(e: &FluidElement, d: &ElementDerivatives, masses: [f64; 2]) -> Rate {
    Rate {
        dx: e.velocity,
        dv: [
            (d.force[0] - d.grad_q[0]) / masses[0],
            (d.force[1] - d.grad_q[1]) / masses[1],
        ],
        div: d.div_v,
        lq: d.lq,
    }
}

fn apply(e: &FluidElement, r: &Rate, dt: f64) -> FluidElement {
    FluidElement {
        id: e.id,
        position: [e.position[0] + dt * r.dx[0], e.position[1] + dt * r.dx[1]],
        velocity: [e.velocity[0] + dt * r.dv[0], e.velocity[1] + dt * r.dv[1]],
        log_density: e.log_density - dt * r.div,
        action: e.action + dt * r.lq,
        amp_integral: e.amp_integral + dt * r.div,
        phase_integral: e.phase_integral + dt * r.lq,
    }
}

fn average(a: &Rate, b: &Rate) -> Rate {
    Rate {
        dx: [0.5 * (a.dx[0] + b.dx[0]), 0.5 * (a.dx[1] + b.dx[1])],
        dv: [0.5 * (a.dv[0] + b.dv[0]), 0.5 * (a.dv[1] + b.dv[1])],
        div: 0.5 * (a.div + b.div),
        lq: 0.5 * (a.lq + b.lq),
    }
}

fn tracer_rate(t: &TracerRates) -> Rate {
    Rate {
        dx: t.velocity,
        dv: [0.0, 0.0],
        div: t.div_v,
        lq: t.lq,
    }
}

fn finite(e: &FluidElement) -> bool {
    e.position.iter().chain(&e.velocity).all(|v| v.is_finite()) && e.log_density.is_finite() && e.action.is_finite()
}

/// One Heun step of length `hydro.dt`.
pub fn step(
    ensemble: &mut Ensemble,
    phys: &PhysicalParams,
    case: Case,
    hydro: &HydroConfig,
    mwls: &MwlsConfig,
) -> Result<()> {
    let first = stage_for(ensemble, phys, case, mwls)?;
    advance(ensemble, first, phys, case, hydro, mwls)
}

/// Completes a Heun step whose first stage is already evaluated.
pub(crate) fn advance(
    ensemble: &mut Ensemble,
    first: Stage,
    phys: &PhysicalParams,
    case: Case,
    hydro: &HydroConfig,
    mwls: &MwlsConfig,
) -> Result<()> {
    let dt = hydro.dt;
    let masses = phys.masses();
    let scale = ensemble.coordinate_scale();

    let r1: Vec<Rate> = ensemble
        .elements
        .iter()
        .zip(&first.elements)
        .map(|(e, d)| element_rate(e, d, masses))
        .collect();
    let predicted: Vec<FluidElement> = ensemble
        .elements
        .iter()
        .zip(&r1)
        .map(|(e, r)| apply(e, r, dt))
        .collect();
    let t1: Vec<Rate> = first.tracers.iter().map(tracer_rate).collect();
    let tracer_pred: Vec<[f64; 2]> = ensemble
        .tracers
        .iter()
        .zip(&t1)
        .map(|(t, r)| apply(&t.element, r, dt).position)
        .collect();

    let time = ensemble.time;
    let second = evaluate(&predicted, &tracer_pred, scale, phys, case, mwls).map_err(|err| match err {
        Error::DuplicatePoint { .. } | Error::NonFinitePoint(_) => Error::NumericalFailure {
            time: time + dt,
            detail: format!("predictor stage produced an invalid cloud: {err}"),
        },
        other => other,
    })?;

    let updated: Vec<FluidElement> = ensemble
        .elements
        .iter()
        .zip(&r1)
        .zip(predicted.iter().zip(&second.elements))
        .map(|((e, a), (p, d))| apply(e, &average(a, &element_rate(p, d, masses)), dt))
        .collect();

    let new_time = time + dt;
    for e in &updated {
        if !finite(e) {
            return Err(Error::NumericalFailure {
                time: new_time,
                detail: format!("element {} has non-finite fields (position {:?})", e.id, e.position),
            });
        }
        if !hydro.domain.contains(e.position) {
            return Err(Error::DomainExit {
                id: e.id,
                time: new_time,
                position: e.position,
            });
        }
    }

    let mut tracers = Vec::with_capacity(ensemble.tracers.len());
    for ((t, a), b) in ensemble.tracers.iter().zip(&t1).zip(&second.tracers) {
        let b = tracer_rate(b);
        let mut next = *t;
        next.element = apply(&t.element, &average(a, &b), dt);
        next.element.velocity = b.dx;
        if finite(&next.element) && hydro.domain.contains(next.element.position) {
            tracers.push(next);
        }
    }

    ensemble.elements = updated;
    ensemble.tracers = tracers;
    ensemble.time = new_time;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydrodynamics::ensemble::initialize_ensemble;
    use crate::model::SuperpositionParams;

    fn element(id: u64, p: [f64; 2], l: f64) -> FluidElement {
        FluidElement {
            id,
            position: p,
            velocity: [0.0, 0.0],
            log_density: l,
            action: 0.0,
            amp_integral: 0.0,
            phase_integral: 0.0,
        }
    }

    fn lattice_ensemble(h: f64, n: i64, f: impl Fn([f64; 2]) -> f64) -> Ensemble {
        let mut elements = Vec::new();
        for j in -n..=n {
            for i in -n..=n {
                let p = [i as f64 * h, j as f64 * h];
                elements.push(element(elements.len() as u64, p, f(p)));
            }
        }
        let next_id = elements.len() as u64;
        Ensemble {
            elements,
            tracers: Vec::new(),
            time: 0.0,
            mesh_spacing: [h, h],
            density_cutoff: 1e-12,
            renormalization: 1.0,
            next_id,
        }
    }

    #[test]
    fn quantum_potential_of_a_single_gaussian() {
        // One Gaussian: a = 0 is not a valid superposition, so place the
        // element near one center of a widely separated pair.
        let phys = PhysicalParams::default();
        let sup = SuperpositionParams { a: 0.8, beta: 4.5 };
        let mut cfg = HydroConfig::for_case(Case::Uncoupled);
        cfg.aspect_ratio = 1.0;
        let ens = initialize_ensemble(&phys, &sup, Case::Uncoupled, &cfg).unwrap();
        let d = hydrodynamic_derivatives(&ens, &phys, Case::Uncoupled, &MwlsConfig::default()).unwrap();
        let i = ens
            .elements
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = (a.1.position[0] - sup.a).powi(2) + a.1.position[1].powi(2);
                let db = (b.1.position[0] - sup.a).powi(2) + b.1.position[1].powi(2);
                da.total_cmp(&db)
            })
            .unwrap()
            .0;
        let p = ens.elements[i].position;
        let beta = sup.beta;
        let alpha = phys.bath_alpha();
        // Q of one Gaussian at displacement (dx, y) from its center.
        let (dx, y) = (p[0] - sup.a, p[1]);
        let expected = beta / phys.m0 * (1.0 - 2.0 * beta * dx * dx) + alpha / (2.0 * phys.m) * (1.0 - alpha * y * y);
        assert!((0.004528 - (beta / 2000.0 + 9.112 / 4000.0)).abs() < 1e-6);
        assert!((d[i].q - expected).abs() < 2e-4, "{} vs {}", d[i].q, expected);
        for (e, di) in ens.elements.iter().zip(&d) {
            assert_eq!(di.div_v, 0.0);
            let v = potential(&phys, Case::Uncoupled, e.position);
            assert!((di.lq + v + di.q).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_density_has_no_quantum_potential() {
        let ens = lattice_ensemble(0.1, 8, |_| -1.3);
        let d = hydrodynamic_derivatives(
            &ens,
            &PhysicalParams::default(),
            Case::Uncoupled,
            &MwlsConfig::default(),
        )
        .unwrap();
        assert!(d.iter().all(|d| d.q.abs() < 1e-8 && d.grad_q[0].abs() < 1e-6));
    }

    #[test]
    fn uniform_static_state_is_a_fixed_point() {
        // Zero potential: the coupled case with c = 0 and an ensemble on y = 0
        // still feels -k y; use a flat bath instead by shrinking omega.
        let phys = PhysicalParams {
            omega: 1e-300,
            c: 0.0,
            ..PhysicalParams::default()
        };
        let mut ens = lattice_ensemble(0.1, 6, |_| -0.5);
        let before = ens.elements.clone();
        let mut cfg = HydroConfig::for_case(Case::Uncoupled);
        cfg.domain.x = [-5.0, 5.0];
        for _ in 0..8 {
            step(&mut ens, &phys, Case::Uncoupled, &cfg, &MwlsConfig::default()).unwrap();
        }
        for (a, b) in before.iter().zip(&ens.elements) {
            assert!((a.position[0] - b.position[0]).abs() < 1e-12 && (a.position[1] - b.position[1]).abs() < 1e-12);
            assert!(b.velocity[0].abs() < 1e-12 && b.velocity[1].abs() < 1e-12);
            assert!((a.log_density - b.log_density).abs() < 1e-12);
        }
        assert!((ens.time - 4.0).abs() < 1e-12);
    }

    #[test]
    fn leaving_the_domain_aborts() {
        let mut ens = lattice_ensemble(0.1, 5, |p| -(p[0] * p[0] + p[1] * p[1]));
        for e in &mut ens.elements {
            e.velocity = [1.0, 0.0];
        }
        let mut cfg = HydroConfig::for_case(Case::Uncoupled);
        cfg.domain.x = [-1.0, 0.6];
        let err = step(
            &mut ens,
            &PhysicalParams::default(),
            Case::Uncoupled,
            &cfg,
            &MwlsConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DomainExit { time, .. } if time == 0.5), "{err}");
    }
}
