//! The quantum trajectory engine.
//!
//! Each fluid element carries `ln rho`, `v` and `S` along
//!
//! ```text
//! dx/dt      = v
//! m_i dv_i/dt = -d_i V - d_i Q
//! d ln rho/dt = -div v
//! dS/dt      = L_q = (m0 vx^2 + m vy^2) / 2 - (V + Q)
//! ```
//!
//! with `Q = -hbar^2/2 [(C_xx + C_x^2)/m0 + (C_yy + C_y^2)/m]`, `C = ln rho / 2`.
//! Spatial derivatives come from MWLS fits over the element cloud; `grad Q`
//! is a second MWLS pass over the sampled `Q`. Steps use Heun's method, and
//! after every regrid interval the elements are replaced by a fresh lattice
//! population.

mod dynamics;
mod ensemble;
mod regrid;
mod run;
mod tracers;

pub use dynamics::{hydrodynamic_derivatives, step, ElementDerivatives};
pub use ensemble::{initial_peak_density, initialize_ensemble, Domain, Ensemble, FluidElement, HydroConfig};
pub use regrid::{regrid, RegridReport};
pub use run::{run, Collector, RunSink, RunSummary};
pub use tracers::{select_tracers, synthesize_wavefunction, SynthesisSegment, Tracer, TrajectoryRecord};
