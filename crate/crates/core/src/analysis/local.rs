//! Local polynomial fits of arbitrary total degree for the analysis frame.
//!
//! The engine's stencils are cubic; diagnostics that need third derivatives
//! (the divergence of the pressure) gain a lot from a higher degree on the
//! same lattice. Only the value and the derivatives up to second order at
//! the stencil center are kept, as six linear operators on the neighbor
//! samples.

use nalgebra::DMatrix;

use crate::mwls::Derivatives;

/// Largest accepted ratio of extreme singular values of the weighted
/// design matrix.
pub const CONDITION_LIMIT: f64 = 1e4;

pub fn basis_size(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Monomials `xi^(d-k) eta^k` by increasing total degree `d`, then `k`, so
/// the first six are `1, xi, eta, xi^2, xi eta, eta^2`.
fn monomials(xi: f64, eta: f64, degree: usize, out: &mut Vec<f64>) {
    out.clear();
    for d in 0..=degree {
        for k in 0..=d {
            out.push(xi.powi((d - k) as i32) * eta.powi(k as i32));
        }
    }
}

/// Operators mapping neighbor samples to `f, f_x, f_y, f_xx, f_yy, f_xy` at
/// the center, in the units of the displacements.
#[derive(Debug, Clone)]
pub struct LocalOperator {
    pub neighbors: Vec<usize>,
    rows: [Vec<f64>; 6],
}

impl LocalOperator {
    /// Fit of the highest degree, from `degree` down to cubic, whose design
    /// matrix is acceptably conditioned. One-sided stencils at the mask edge
    /// usually end up with a lower degree.
    pub fn best(neighbors: Vec<usize>, displacements: &[[f64; 2]], degree: usize, weight_scale: f64) -> Option<Self> {
        (3..=degree.max(3))
            .rev()
            .find_map(|d| Self::new(neighbors.clone(), displacements, d, weight_scale))
    }

    /// `displacements[i]` is the offset of `neighbors[i]` from the center.
    /// Returns `None` when the neighbors do not determine the basis within
    /// [`CONDITION_LIMIT`].
    pub fn new(neighbors: Vec<usize>, displacements: &[[f64; 2]], degree: usize, weight_scale: f64) -> Option<Self> {
        let n = displacements.len();
        let nb = basis_size(degree);
        let radius = displacements.iter().map(|d| d[0].hypot(d[1])).fold(0.0, f64::max);
        if n < nb || !(radius > 0.0) {
            return None;
        }
        let mut design = DMatrix::zeros(n, nb);
        // Rows carry the square root of the Gaussian weight, so the fit
        // minimizes the same weighted sum as the engine's stencils.
        let mut sqrt_w = Vec::with_capacity(n);
        let mut row = Vec::with_capacity(nb);
        for (i, d) in displacements.iter().enumerate() {
            let (s, t) = (d[0] / radius, d[1] / radius);
            let w = (-0.5 * (s * s + t * t) / (weight_scale * weight_scale)).exp();
            monomials(s, t, degree, &mut row);
            for (j, p) in row.iter().enumerate() {
                design[(i, j)] = w * p;
            }
            sqrt_w.push(w);
        }
        let qr = design.qr();
        let r = qr.r();
        let sv = r.singular_values();
        let (smin, smax) = (sv.min(), sv.max());
        if !(smin * CONDITION_LIMIT > smax) {
            return None;
        }
        // Coefficients are R^-1 Q^T (sqrt(w) f).
        let pinv = r.solve_upper_triangular(&qr.q().transpose())?;
        let r2 = radius * radius;
        let scale = [1.0, radius, radius, 0.5 * r2, 0.5 * r2, r2];
        // Coefficient index of each output: f, f_x, f_y, f_xx, f_yy, f_xy.
        let index = [0, 1, 2, 3, 5, 4];
        let rows = std::array::from_fn(|r| (0..n).map(|i| pinv[(index[r], i)] * sqrt_w[i] / scale[r]).collect());
        Some(Self { neighbors, rows })
    }

    pub fn apply(&self, samples: &[f64]) -> Derivatives {
        let dot = |r: &Vec<f64>| r.iter().zip(samples).map(|(a, b)| a * b).sum::<f64>();
        Derivatives {
            f: dot(&self.rows[0]),
            f_x: dot(&self.rows[1]),
            f_y: dot(&self.rows[2]),
            f_xx: dot(&self.rows[3]),
            f_yy: dot(&self.rows[4]),
            f_xy: dot(&self.rows[5]),
        }
    }

    pub fn apply_field(&self, field: &[f64]) -> Derivatives {
        let samples: Vec<f64> = self.neighbors.iter().map(|&j| field[j]).collect();
        self.apply(&samples)
    }
}
