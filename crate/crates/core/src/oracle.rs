//! Grid-based reference solutions: a Strang split-operator propagator for
//! the full 2-D Schrödinger equation, plus closed-form free-Gaussian results.
//!
//! Nothing here touches the meshless machinery, so agreement between this
//! solver and the trajectory engine is a genuine cross-check.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{initial_wavefunction, potential, Case, PhysicalParams, SuperpositionParams};
use crate::snapshot::{bilinear, FieldSnapshot, Mesh, Source};

/// Largest tolerated deviation of the sampled initial norm from 1 before rescaling.
pub const REPRESENTATION_TOLERANCE: f64 = 1e-6;

/// Periodic grid for the reference solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleGrid {
    pub nx: usize,
    pub ny: usize,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self {
            nx: 256,
            ny: 256,
            x_range: [-6.0, 6.0],
            y_range: [-3.0, 3.0],
        }
    }
}

impl OracleGrid {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("nx", self.nx), ("ny", self.ny)] {
            if n < 8 || !n.is_power_of_two() {
                return Err(Error::Config(format!(
                    "oracle.{name} must be a power of two >= 8, got {n}"
                )));
            }
        }
        for (name, r) in [("x_range", self.x_range), ("y_range", self.y_range)] {
            if !(r[1] > r[0]) || !r.iter().all(|v| v.is_finite()) {
                return Err(Error::Config(format!("oracle.{name} must be increasing, got {r:?}")));
            }
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_range[1] - self.x_range[0]) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_range[1] - self.y_range[0]) / self.ny as f64
    }

    pub fn mesh(&self) -> Mesh {
        Mesh {
            origin: [self.x_range[0], self.y_range[0]],
            spacing: [self.dx(), self.dy()],
            nx: self.nx,
            ny: self.ny,
        }
    }

    /// Angular wavenumbers in FFT order.
    fn wavenumbers(n: usize, step: f64) -> Vec<f64> {
        let scale = std::f64::consts::TAU / (n as f64 * step);
        (0..n)
            .map(|i| {
                let k = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
                k * scale
            })
            .collect()
    }
}

/// Complex wavefunction on an [`OracleGrid`], row-major in `y` then `x`.
#[derive(Debug, Clone)]
pub struct OracleState {
    pub grid: OracleGrid,
    pub psi: Vec<Complex64>,
    pub time: f64,
}

impl OracleState {
    pub fn norm(&self) -> f64 {
        self.psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx() * self.grid.dy()
    }

    pub fn density(&self) -> Vec<f64> {
        self.psi.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Largest density within `cells` grid cells of any edge, relative to the peak.
    pub fn boundary_leakage(&self, cells: usize) -> f64 {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let rho = self.density();
        let peak = rho.iter().copied().fold(0.0, f64::max);
        let mut edge = 0.0f64;
        for j in 0..ny {
            for i in 0..nx {
                if i < cells || j < cells || i >= nx - cells || j >= ny - cells {
                    edge = edge.max(rho[j * nx + i]);
                }
            }
        }
        edge / peak
    }
}

/// Samples the initial superposition and rescales it to unit grid norm.
pub fn oracle_init(phys: &PhysicalParams, sup: &SuperpositionParams, grid: &OracleGrid) -> Result<OracleState> {
    grid.validate()?;
    let mesh = grid.mesh();
    let psi: Vec<Complex64> = mesh
        .points()
        .map(|p| Complex64::new(initial_wavefunction(phys, sup, p).0, 0.0))
        .collect();
    let mut state = OracleState {
        grid: *grid,
        psi,
        time: 0.0,
    };
    let norm = state.norm();
    if (norm - 1.0).abs() > REPRESENTATION_TOLERANCE {
        return Err(Error::Resolution(format!(
            "initial state norm on the {}x{} grid is {norm}, off by more than {REPRESENTATION_TOLERANCE:e}",
            grid.nx, grid.ny
        )));
    }
    let scale = 1.0 / norm.sqrt();
    state.psi.iter_mut().for_each(|z| *z *= scale);
    Ok(state)
}

/// Precomputed Strang propagator `e^{-iV dt/2} e^{-iT dt} e^{-iV dt/2}`.
pub struct SplitOperator {
    grid: OracleGrid,
    dt: f64,
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    fft_x: Arc<dyn Fft<f64>>,
    ifft_x: Arc<dyn Fft<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
}

impl SplitOperator {
    pub fn new(phys: &PhysicalParams, case: Case, grid: &OracleGrid, dt: f64) -> Result<Self> {
        grid.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("oracle time step must be > 0, got {dt}")));
        }
        let mesh = grid.mesh();
        let hbar = phys.hbar;
        let half_potential = mesh
            .points()
            .map(|p| Complex64::from_polar(1.0, -0.5 * potential(phys, case, p) * dt / hbar))
            .collect();
        let kx = OracleGrid::wavenumbers(grid.nx, grid.dx());
        let ky = OracleGrid::wavenumbers(grid.ny, grid.dy());
        let mut kinetic = Vec::with_capacity(grid.nx * grid.ny);
        for &qy in &ky {
            for &qx in &kx {
                let t = hbar * hbar * (qx * qx / (2.0 * phys.m0) + qy * qy / (2.0 * phys.m));
                kinetic.push(Complex64::from_polar(1.0, -t * dt / hbar));
            }
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            grid: *grid,
            dt,
            half_potential,
            kinetic,
            fft_x: planner.plan_fft_forward(grid.nx),
            ifft_x: planner.plan_fft_inverse(grid.nx),
            fft_y: planner.plan_fft_forward(grid.ny),
            ifft_y: planner.plan_fft_inverse(grid.ny),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `state` by one time step.
    pub fn step(&self, state: &mut OracleState) {
        debug_assert_eq!(state.grid, self.grid);
        multiply(&mut state.psi, &self.half_potential);
        self.transform(&mut state.psi, true);
        multiply(&mut state.psi, &self.kinetic);
        self.transform(&mut state.psi, false);
        multiply(&mut state.psi, &self.half_potential);
        state.time += self.dt;
    }

    /// Unnormalized forward or normalized inverse 2-D transform.
    fn transform(&self, data: &mut [Complex64], forward: bool) {
        let (fx, fy) = if forward {
            (&self.fft_x, &self.fft_y)
        } else {
            (&self.ifft_x, &self.ifft_y)
        };
        fft2(data, self.grid.nx, self.grid.ny, fx.as_ref(), fy.as_ref());
        if !forward {
            let scale = 1.0 / (self.grid.nx * self.grid.ny) as f64;
            data.par_iter_mut().for_each(|z| *z *= scale);
        }
    }

    /// Spectral first derivatives `(d/dx psi, d/dy psi)`.
    pub fn gradient(&self, psi: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        spectral_gradient(&self.grid, psi)
    }
}

fn multiply(a: &mut [Complex64], b: &[Complex64]) {
    a.par_iter_mut().zip(b.par_iter()).for_each(|(z, w)| *z *= w);
}

fn fft2(data: &mut [Complex64], nx: usize, ny: usize, fx: &dyn Fft<f64>, fy: &dyn Fft<f64>) {
    data.par_chunks_mut(nx).for_each(|row| fx.process(row));
    let mut t = transpose(data, nx, ny);
    t.par_chunks_mut(ny).for_each(|col| fy.process(col));
    data.copy_from_slice(&transpose(&t, ny, nx));
}

/// Transposes a row-major `rows x cols` block (`cols` contiguous).
fn transpose(data: &[Complex64], cols: usize, rows: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    out.par_chunks_mut(rows).enumerate().for_each(|(i, col)| {
        for (j, z) in col.iter_mut().enumerate() {
            *z = data[j * cols + i];
        }
    });
    out
}

fn spectral_gradient(grid: &OracleGrid, psi: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut planner = FftPlanner::new();
    let (fx, fy) = (planner.plan_fft_forward(nx), planner.plan_fft_forward(ny));
    let (ix, iy) = (planner.plan_fft_inverse(nx), planner.plan_fft_inverse(ny));
    let mut spec = psi.to_vec();
    fft2(&mut spec, nx, ny, fx.as_ref(), fy.as_ref());
    let mut kx = OracleGrid::wavenumbers(nx, grid.dx());
    let mut ky = OracleGrid::wavenumbers(ny, grid.dy());
    // The Nyquist mode has no odd counterpart.
    kx[nx / 2] = 0.0;
    ky[ny / 2] = 0.0;
    let scale = 1.0 / (nx * ny) as f64;
    let mut dx = spec.clone();
    let mut dy = spec;
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            dx[k] *= Complex64::new(0.0, kx[i] * scale);
            dy[k] *= Complex64::new(0.0, ky[j] * scale);
        }
    }
    fft2(&mut dx, nx, ny, ix.as_ref(), iy.as_ref());
    fft2(&mut dy, nx, ny, ix.as_ref(), iy.as_ref());
    (dx, dy)
}

/// Propagates `state` to `t_final` in steps of `prop.dt()`, handing each
/// state whose time is a multiple of `stride` steps to `visit`.
pub fn propagate<F>(
    prop: &SplitOperator,
    state: &mut OracleState,
    n_steps: usize,
    stride: usize,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(&OracleState) -> Result<()>,
{
    let stride = stride.max(1);
    visit(state)?;
    for n in 1..=n_steps {
        prop.step(state);
        if n % stride == 0 {
            visit(state)?;
        }
    }
    Ok(())
}

/// Convenience wrapper: one Strang step.
pub fn oracle_step(state: &OracleState, phys: &PhysicalParams, case: Case, dt: f64) -> Result<OracleState> {
    let prop = SplitOperator::new(phys, case, &state.grid, dt)?;
    let mut next = state.clone();
    prop.step(&mut next);
    Ok(next)
}

/// Density and velocity fields of a reference state. Velocities are masked
/// (NaN) where `rho <= cutoff`; the action is never reconstructed.
pub fn oracle_fields(state: &OracleState, masses: [f64; 2], hbar: f64, cutoff: f64) -> FieldSnapshot {
    let mesh = state.grid.mesh();
    let mut snap = FieldSnapshot::empty(state.time, Source::Oracle, mesh);
    let (gx, gy) = spectral_gradient(&state.grid, &state.psi);
    for k in 0..mesh.len() {
        let z = state.psi[k];
        let rho = z.norm_sqr();
        snap.rho[k] = rho;
        if rho > cutoff {
            snap.vx[k] = hbar / masses[0] * (gx[k] / z).im;
            snap.vy[k] = hbar / masses[1] * (gy[k] / z).im;
        }
    }
    snap
}

/// Differences between a trajectory-engine snapshot and a reference snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub time: f64,
    /// `||rho_qtm - rho_ref||_2 / ||rho_ref||_2` over the trajectory mesh.
    pub l2_rho: f64,
    /// `max |rho_qtm - rho_ref| / max rho_ref`.
    pub linf_rho: f64,
    /// RMS of `|v_qtm - v_ref|` over jointly unmasked points.
    pub masked_v_rms_diff: f64,
    /// Number of points entering the velocity RMS.
    pub velocity_points: usize,
}

/// Compares `qtm` against `reference`, interpolating the reference
/// bilinearly onto the `qtm` mesh. `time_tolerance` is typically half the
/// integrator step.
pub fn compare_snapshots(qtm: &FieldSnapshot, reference: &FieldSnapshot, time_tolerance: f64) -> Result<ErrorReport> {
    if (qtm.time - reference.time).abs() > time_tolerance {
        return Err(Error::Alignment(format!(
            "snapshot times differ: {} vs {} (tolerance {time_tolerance})",
            qtm.time, reference.time
        )));
    }
    let periodic = reference.source == Source::Oracle;
    let (mut num, mut den, mut max_diff, mut max_ref) = (0.0, 0.0, 0.0f64, 0.0f64);
    let (mut v_sum, mut v_count) = (0.0, 0usize);
    for (k, p) in qtm.mesh.points().enumerate() {
        let r = bilinear(&reference.mesh, &reference.rho, p, periodic).unwrap_or(0.0);
        let d = qtm.rho[k] - r;
        num += d * d;
        den += r * r;
        max_diff = max_diff.max(d.abs());
        max_ref = max_ref.max(r);
        if qtm.vx[k].is_finite() && qtm.vy[k].is_finite() {
            let rv = (
                bilinear(&reference.mesh, &reference.vx, p, periodic),
                bilinear(&reference.mesh, &reference.vy, p, periodic),
            );
            if let (Some(vx), Some(vy)) = rv {
                v_sum += (qtm.vx[k] - vx).powi(2) + (qtm.vy[k] - vy).powi(2);
                v_count += 1;
            }
        }
    }
    let safe = |n: f64, d: f64| if d > 0.0 { n / d } else { n };
    Ok(ErrorReport {
        time: qtm.time,
        l2_rho: safe(num.sqrt(), den.sqrt()),
        linf_rho: safe(max_diff, max_ref),
        masked_v_rms_diff: if v_count > 0 {
            (v_sum / v_count as f64).sqrt()
        } else {
            0.0
        },
        velocity_points: v_count,
    })
}

/// Exact 1-D free Gaussian `|psi|^2` and velocity at `x` for a packet
/// released at rest at `center` with width exponent `beta`.
pub fn analytic_free_gaussian(beta: f64, mass: f64, hbar: f64, center: f64, t: f64, x: f64) -> (f64, f64) {
    let sigma0_sq = 1.0 / (4.0 * beta);
    let tau = hbar * t / (2.0 * mass * sigma0_sq);
    let sigma_sq = sigma0_sq * (1.0 + tau * tau);
    let u = x - center;
    let rho = (-u * u / (2.0 * sigma_sq)).exp() / (std::f64::consts::TAU * sigma_sq).sqrt();
    let v = u * tau * hbar / (2.0 * mass * sigma0_sq) / (1.0 + tau * tau);
    (rho, v)
}

/// Width `sigma(t)` of the free Gaussian density.
pub fn free_gaussian_width(beta: f64, mass: f64, hbar: f64, t: f64) -> f64 {
    let sigma0_sq = 1.0 / (4.0 * beta);
    let tau = hbar * t / (2.0 * mass * sigma0_sq);
    (sigma0_sq * (1.0 + tau * tau)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_gaussian_closed_form() {
        assert!((free_gaussian_width(4.5, 2000.0, 1.0, 0.0) - 0.2357).abs() < 1e-4);
        let w = free_gaussian_width(4.5, 2000.0, 1.0, 450.0);
        assert!((w - 0.532323).abs() < 1e-6);
        assert!((w / 0.5325 - 1.0).abs() < 1e-3);
        assert_eq!(analytic_free_gaussian(4.5, 2000.0, 1.0, 0.0, 123.0, 0.0).1, 0.0);
        // Density integrates to one.
        let h = 1e-3;
        let total: f64 = (-5000..5000)
            .map(|i| analytic_free_gaussian(4.5, 2000.0, 1.0, 0.0, 200.0, i as f64 * h).0 * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn init_is_normalized_and_even() {
        let p = PhysicalParams::default();
        let s = SuperpositionParams::default();
        let g = OracleGrid::default();
        let st = oracle_init(&p, &s, &g).unwrap();
        assert!((st.norm() - 1.0).abs() < 1e-14);
        // x -> -x maps index i to nx - i on this symmetric periodic grid.
        let (nx, ny) = (g.nx, g.ny);
        for j in 0..ny {
            for i in 1..nx {
                let a = st.psi[j * nx + i];
                let b = st.psi[j * nx + (nx - i)];
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let g = OracleGrid {
            nx: 8,
            ny: 8,
            ..OracleGrid::default()
        };
        assert!(matches!(
            oracle_init(&PhysicalParams::default(), &SuperpositionParams::default(), &g),
            Err(Error::Resolution(_))
        ));
        let bad = OracleGrid {
            nx: 100,
            ..OracleGrid::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn initial_velocity_vanishes() {
        let p = PhysicalParams::default();
        let st = oracle_init(&p, &SuperpositionParams::default(), &OracleGrid::default()).unwrap();
        let snap = oracle_fields(&st, p.masses(), 1.0, 1e-7);
        let worst = snap
            .vx
            .iter()
            .chain(&snap.vy)
            .filter(|v| v.is_finite())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-9, "{worst}");
        assert!(snap.s.iter().all(|s| s.is_nan()));
    }

    #[test]
    fn compare_with_self_is_zero() {
        let p = PhysicalParams::default();
        let st = oracle_init(&p, &SuperpositionParams::default(), &OracleGrid::default()).unwrap();
        let snap = oracle_fields(&st, p.masses(), 1.0, 1e-7);
        let r = compare_snapshots(&snap, &snap, 0.25).unwrap();
        assert_eq!(r.l2_rho, 0.0);
        assert_eq!(r.linf_rho, 0.0);
        assert_eq!(r.masked_v_rms_diff, 0.0);
        let mut later = snap.clone();
        later.time = 2.0;
        assert!(matches!(
            compare_snapshots(&later, &snap, 0.25),
            Err(Error::Alignment(_))
        ));
    }
}
