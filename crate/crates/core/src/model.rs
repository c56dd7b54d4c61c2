//! The physical system: a free system mode `x` bilinearly coupled to one
//! harmonic bath mode `y`, and the two-Gaussian initial superposition.
//!
//! Hartree atomic units throughout, with `hbar = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hamiltonian constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalParams {
    /// Mass of the system mode `x`.
    pub m0: f64,
    /// Mass of the bath mode `y`.
    pub m: f64,
    /// Bath angular frequency.
    pub omega: f64,
    /// Bilinear coupling constant `c` in `c x y`.
    pub c: f64,
    pub hbar: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            m0: 2000.0,
            m: 2000.0,
            omega: 0.004556,
            c: 0.015,
            hbar: 1.0,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.m0 > 0.0 && self.m0.is_finite()) {
            return Err(Error::Config(format!("physical.m0 must be > 0, got {}", self.m0)));
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(Error::Config(format!("physical.m must be > 0, got {}", self.m)));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::Config(format!("physical.omega must be > 0, got {}", self.omega)));
        }
        if !self.c.is_finite() {
            return Err(Error::Config("physical.c must be finite".into()));
        }
        if self.hbar != 1.0 {
            return Err(Error::Config(format!(
                "physical.hbar is fixed at 1 (atomic units), got {}",
                self.hbar
            )));
        }
        Ok(())
    }

    /// Bath stiffness `k = m omega^2`.
    pub fn stiffness(&self) -> f64 {
        self.m * self.omega * self.omega
    }

    /// Coupling constant in effect for `case` (zero when uncoupled).
    pub fn coupling(&self, case: Case) -> f64 {
        match case {
            Case::Coupled => self.c,
            Case::Uncoupled => 0.0,
        }
    }

    /// Per-axis masses `[m0, m]`.
    pub fn masses(&self) -> [f64; 2] {
        [self.m0, self.m]
    }

    /// Exponent `alpha = m omega / hbar` of the bath ground state.
    pub fn bath_alpha(&self) -> f64 {
        self.m * self.omega / self.hbar
    }
}

/// Shape of the initial two-Gaussian superposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuperpositionParams {
    /// Half-separation of the Gaussian centers.
    pub a: f64,
    /// Gaussian width exponent.
    pub beta: f64,
}

impl Default for SuperpositionParams {
    fn default() -> Self {
        Self { a: 0.8, beta: 4.5 }
    }
}

impl SuperpositionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::Config(format!("superposition.a must be > 0, got {}", self.a)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "superposition.beta must be > 0, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Per-Gaussian factor `N` making the full 2-D state unit-normalized,
    /// including the overlap `exp(-2 beta a^2)` of the two components.
    pub fn norm(&self) -> f64 {
        let overlap = (-2.0 * self.beta * self.a * self.a).exp();
        let single = (std::f64::consts::PI / (2.0 * self.beta)).sqrt();
        1.0 / (single * (1.0 + overlap)).sqrt()
    }
}

/// Whether the system-bath coupling is switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    Uncoupled,
    Coupled,
}

impl Case {
    pub fn is_coupled(self) -> bool {
        matches!(self, Case::Coupled)
    }

    pub fn label(self) -> &'static str {
        match self {
            Case::Uncoupled => "uncoupled",
            Case::Coupled => "coupled",
        }
    }
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uncoupled" => Ok(Case::Uncoupled),
            "coupled" => Ok(Case::Coupled),
            other => Err(Error::Config(format!("unknown case {other:?}"))),
        }
    }
}

/// `V(x, y) = k y^2 / 2 + c x y`.
pub fn potential(params: &PhysicalParams, case: Case, point: [f64; 2]) -> f64 {
    let [x, y] = point;
    0.5 * params.stiffness() * y * y + params.coupling(case) * x * y
}

/// Classical force `-grad V = (-c y, -k y - c x)`.
pub fn potential_gradient(params: &PhysicalParams, case: Case, point: [f64; 2]) -> [f64; 2] {
    let [x, y] = point;
    let c = params.coupling(case);
    [-c * y, -params.stiffness() * y - c * x]
}

/// Amplitude and phase of the initial state at `point`.
///
/// The state is real, so the phase is identically zero.
pub fn initial_wavefunction(phys: &PhysicalParams, sup: &SuperpositionParams, point: [f64; 2]) -> (f64, f64) {
    let [x, y] = point;
    let n = sup.norm();
    let left = (-sup.beta * (x - sup.a).powi(2)).exp();
    let right = (-sup.beta * (x + sup.a).powi(2)).exp();
    let r = std::f64::consts::FRAC_1_SQRT_2 * n * (left + right) * bath_ground_state(phys, y);
    (r, 0.0)
}

/// `ln rho` of the initial state, evaluated without underflow far from the centers.
pub fn initial_log_density(phys: &PhysicalParams, sup: &SuperpositionParams, point: [f64; 2]) -> f64 {
    let [x, y] = point;
    let alpha = phys.bath_alpha();
    let ea = -sup.beta * (x - sup.a).powi(2);
    let eb = -sup.beta * (x + sup.a).powi(2);
    let hi = ea.max(eb);
    let log_sum = hi + ((ea - hi).exp() + (eb - hi).exp()).ln();
    let log_r = -0.5 * std::f64::consts::LN_2 + sup.norm().ln() + log_sum + 0.25 * (alpha / std::f64::consts::PI).ln()
        - 0.5 * alpha * y * y;
    2.0 * log_r
}

/// Normalized harmonic ground state `(alpha/pi)^(1/4) exp(-alpha y^2 / 2)`.
pub fn bath_ground_state(phys: &PhysicalParams, y: f64) -> f64 {
    let alpha = phys.bath_alpha();
    (alpha / std::f64::consts::PI).powf(0.25) * (-0.5 * alpha * y * y).exp()
}

/// Angle of the coupled potential's valley floor `y*(x) = -(c/k) x`, in degrees.
pub fn valley_direction(params: &PhysicalParams, case: Case) -> Result<f64> {
    let c = params.coupling(case);
    if c == 0.0 {
        return Err(Error::Config(
            "valley direction is undefined without system-bath coupling".into(),
        ));
    }
    Ok((-c / params.stiffness()).atan().to_degrees())
}
