//! Weighted least-squares fits of the 10-term cubic basis on a neighbor stencil.
//!
//! Displacements are rescaled by the stencil radius before the normal
//! equations are formed, so the 10x10 system stays well conditioned for any
//! mesh spacing. The fit is linear in the sampled values: a [`Stencil`]
//! stores the operator rows once and can then be applied to any number of
//! fields sampled on the same neighbors.

use nalgebra::{DMatrix, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BASIS_SIZE: usize = 10;

/// Normal-matrix condition estimate above which the SVD route is used.
pub const CHOLESKY_CONDITION_LIMIT: f64 = 1e10;

/// Relative singular value below which the weighted design matrix is
/// treated as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

type Mat10 = SMatrix<f64, BASIS_SIZE, BASIS_SIZE>;
type Vec10 = SVector<f64, BASIS_SIZE>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MwlsConfig {
    /// Number of neighbors in each stencil.
    pub n_b: usize,
    /// Gaussian bandwidth as a fraction of the farthest-neighbor distance.
    pub weight_scale: f64,
}

impl Default for MwlsConfig {
    fn default() -> Self {
        Self {
            n_b: 35,
            weight_scale: 0.8,
        }
    }
}

impl MwlsConfig {
    pub fn with_neighbors(n_b: usize) -> Self {
        Self { n_b, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_b < BASIS_SIZE {
            return Err(Error::Config(format!(
                "mwls.n_b must be at least {BASIS_SIZE}, got {}",
                self.n_b
            )));
        }
        if !(self.weight_scale > 0.0 && self.weight_scale.is_finite()) {
            return Err(Error::Config(format!(
                "mwls.weight_scale must be > 0, got {}",
                self.weight_scale
            )));
        }
        Ok(())
    }
}

/// Monomials `1, ξ, η, ξ², η², ξη, ξ³, η³, ξ²η, ξη²`.
#[inline]
pub fn basis(xi: f64, eta: f64) -> [f64; BASIS_SIZE] {
    let (x2, y2) = (xi * xi, eta * eta);
    [1.0, xi, eta, x2, y2, xi * eta, x2 * xi, y2 * eta, x2 * eta, xi * y2]
}

/// Total degree of each basis monomial.
const DEGREE: [i32; BASIS_SIZE] = [0, 1, 1, 2, 2, 2, 3, 3, 3, 3];

/// Value and derivatives up to second order at the stencil center.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Derivatives {
    pub f: f64,
    pub f_x: f64,
    pub f_y: f64,
    pub f_xx: f64,
    pub f_yy: f64,
    pub f_xy: f64,
}

impl Derivatives {
    pub fn gradient(&self) -> [f64; 2] {
        [self.f_x, self.f_y]
    }

    pub fn laplacian(&self) -> f64 {
        self.f_xx + self.f_yy
    }
}

/// A fitted local cubic. Coefficients are in physical (unscaled) units of the
/// displacement from `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    pub coefficients: [f64; BASIS_SIZE],
    pub center: [f64; 2],
    pub condition_estimate: f64,
}

impl LocalFit {
    pub fn derivatives(&self) -> Derivatives {
        let a = &self.coefficients;
        Derivatives {
            f: a[0],
            f_x: a[1],
            f_y: a[2],
            f_xx: 2.0 * a[3],
            f_yy: 2.0 * a[4],
            f_xy: a[5],
        }
    }

    /// Evaluates the local polynomial at an absolute position.
    pub fn evaluate(&self, point: [f64; 2]) -> f64 {
        let p = basis(point[0] - self.center[0], point[1] - self.center[1]);
        p.iter().zip(&self.coefficients).map(|(p, a)| p * a).sum()
    }
}

/// Linear map from neighbor samples to the full coefficient vector.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub center: [f64; 2],
    pub neighbors: Vec<usize>,
    /// Row-major `BASIS_SIZE x neighbors.len()`, already unscaled.
    weights: Vec<f64>,
    pub condition_estimate: f64,
}

impl Stencil {
    /// Builds the operator for a stencil given neighbor displacements from the
    /// center. `index` only labels errors.
    pub fn new(
        center: [f64; 2],
        neighbors: Vec<usize>,
        displacements: &[[f64; 2]],
        cfg: &MwlsConfig,
        index: usize,
    ) -> Result<Self> {
        let n = displacements.len();
        let degenerate = |reason: String| Error::DegenerateGeometry {
            index,
            target: center,
            reason,
        };
        if n < BASIS_SIZE {
            return Err(degenerate(format!(
                "{n} neighbors cannot determine {BASIS_SIZE} coefficients"
            )));
        }
        let radius = displacements
            .iter()
            .map(|d| (d[0] * d[0] + d[1] * d[1]).sqrt())
            .fold(0.0, f64::max);
        if !(radius > 0.0) {
            return Err(degenerate("all neighbors coincide with the target".into()));
        }
        let h = cfg.weight_scale;
        let mut rows = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        let mut normal = Mat10::zeros();
        for d in displacements {
            let (s, t) = (d[0] / radius, d[1] / radius);
            let wi = (-(s * s + t * t) / (h * h)).exp();
            let p = Vec10::from(basis(s, t));
            normal.ger(wi, &p, &p, 1.0);
            rows.push(p);
            w.push(wi);
        }

        let mut scaled = vec![0.0; BASIS_SIZE * n];
        let condition_estimate = match normal.cholesky() {
            Some(chol) => {
                let l = chol.l_dirty();
                let diag = (0..BASIS_SIZE).map(|i| l[(i, i)]);
                let (lo, hi) = diag.fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
                let cond = (hi / lo).powi(2);
                if cond <= CHOLESKY_CONDITION_LIMIT {
                    let inv = chol.inverse();
                    for (j, (p, wi)) in rows.iter().zip(&w).enumerate() {
                        let col = inv * (p * *wi);
                        for k in 0..BASIS_SIZE {
                            scaled[k * n + j] = col[k];
                        }
                    }
                    Some(cond)
                } else {
                    None
                }
            }
            None => None,
        };
        let condition_estimate = match condition_estimate {
            Some(c) => c,
            None => {
                // Rank-revealing route on the weighted design matrix.
                let design = DMatrix::from_fn(n, BASIS_SIZE, |i, k| w[i].sqrt() * rows[i][k]);
                let svd = design.svd(true, true);
                let smax = svd.singular_values.max();
                let smin = svd.singular_values.min();
                if !(smin > RANK_TOLERANCE * smax) {
                    return Err(degenerate(format!(
                        "weighted design matrix is rank deficient (singular values {smin:e} / {smax:e})"
                    )));
                }
                let pinv = svd
                    .pseudo_inverse(RANK_TOLERANCE * smax)
                    .map_err(|e| degenerate(e.to_string()))?;
                for j in 0..n {
                    let sw = w[j].sqrt();
                    for k in 0..BASIS_SIZE {
                        scaled[k * n + j] = pinv[(k, j)] * sw;
                    }
                }
                (smax / smin).powi(2)
            }
        };

        for (k, deg) in DEGREE.iter().enumerate() {
            let s = radius.powi(-deg);
            for v in &mut scaled[k * n..(k + 1) * n] {
                *v *= s;
            }
        }
        Ok(Self {
            center,
            neighbors,
            weights: scaled,
            condition_estimate,
        })
    }

    /// Coefficients of the fit to `samples`, given in neighbor order.
    pub fn coefficients_from(&self, samples: &[f64]) -> [f64; BASIS_SIZE] {
        let n = self.neighbors.len();
        debug_assert_eq!(samples.len(), n);
        let mut a = [0.0; BASIS_SIZE];
        for (k, ak) in a.iter_mut().enumerate() {
            *ak = self.weights[k * n..(k + 1) * n]
                .iter()
                .zip(samples)
                .map(|(w, v)| w * v)
                .sum();
        }
        a
    }

    fn row_dot(&self, k: usize, field: &[f64]) -> f64 {
        let n = self.neighbors.len();
        self.weights[k * n..(k + 1) * n]
            .iter()
            .zip(&self.neighbors)
            .map(|(w, &j)| w * field[j])
            .sum()
    }

    /// Fitted value at the center for a field indexed like the cloud.
    pub fn value(&self, field: &[f64]) -> f64 {
        self.row_dot(0, field)
    }

    /// First derivatives at the center.
    pub fn gradient(&self, field: &[f64]) -> [f64; 2] {
        [self.row_dot(1, field), self.row_dot(2, field)]
    }

    /// Value and derivatives at the center for a field indexed like the cloud.
    pub fn derivatives(&self, field: &[f64]) -> Derivatives {
        Derivatives {
            f: self.row_dot(0, field),
            f_x: self.row_dot(1, field),
            f_y: self.row_dot(2, field),
            f_xx: 2.0 * self.row_dot(3, field),
            f_yy: 2.0 * self.row_dot(4, field),
            f_xy: self.row_dot(5, field),
        }
    }

    /// Full local fit for a field indexed like the cloud.
    pub fn fit(&self, field: &[f64]) -> LocalFit {
        let samples: Vec<f64> = self.neighbors.iter().map(|&j| field[j]).collect();
        LocalFit {
            coefficients: self.coefficients_from(&samples),
            center: self.center,
            condition_estimate: self.condition_estimate,
        }
    }
}

/// Fits the cubic basis to `values` at `displacements` from the target.
pub fn fit_local(values: &[f64], displacements: &[[f64; 2]], cfg: &MwlsConfig) -> Result<LocalFit> {
    if values.len() != displacements.len() {
        return Err(Error::Config(format!(
            "{} values for {} displacements",
            values.len(),
            displacements.len()
        )));
    }
    let stencil = Stencil::new([0.0, 0.0], (0..values.len()).collect(), displacements, cfg, 0)?;
    Ok(LocalFit {
        coefficients: stencil.coefficients_from(values),
        center: [0.0, 0.0],
        condition_estimate: stencil.condition_estimate,
    })
}
