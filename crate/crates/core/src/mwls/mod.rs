//! Meshless derivatives and interpolation on scattered points by weighted
//! moving least squares with a 10-term cubic basis.

mod cloud;
mod fit;

use rayon::prelude::*;

pub use cloud::{inside_convex, PointCloud, MIN_SEPARATION};
pub use fit::{
    basis, fit_local, Derivatives, LocalFit, MwlsConfig, Stencil, BASIS_SIZE, CHOLESKY_CONDITION_LIMIT, RANK_TOLERANCE,
};

use crate::error::Result;

/// One stencil per target, all drawing neighbors from the same cloud.
#[derive(Debug, Clone)]
pub struct StencilSet {
    stencils: Vec<Stencil>,
    /// Coordinate scale of the cloud; derivatives are returned per unit of
    /// the original coordinates.
    scale: [f64; 2],
}

impl StencilSet {
    /// Stencils centered on every cloud point.
    pub fn at_cloud(cloud: &PointCloud, cfg: &MwlsConfig) -> Result<Self> {
        Self::at_targets(cloud, cloud.positions(), cfg)
    }

    /// Stencils centered on arbitrary targets.
    pub fn at_targets(cloud: &PointCloud, targets: &[[f64; 2]], cfg: &MwlsConfig) -> Result<Self> {
        Self::build(cloud, targets, cfg, false)
    }

    /// Like [`StencilSet::at_targets`], but a stencil whose neighbors are
    /// degenerate (e.g. spanning too few lattice rows at the edge of a
    /// point set) is retried with twice as many neighbors, repeatedly, until
    /// it fits or the cloud is exhausted.
    pub fn at_targets_widening(cloud: &PointCloud, targets: &[[f64; 2]], cfg: &MwlsConfig) -> Result<Self> {
        Self::build(cloud, targets, cfg, true)
    }

    fn build(cloud: &PointCloud, targets: &[[f64; 2]], cfg: &MwlsConfig, widen: bool) -> Result<Self> {
        cfg.validate()?;
        let fit = |i: usize, t: [f64; 2], n: usize| -> Result<Stencil> {
            let neighbors = cloud.find_neighbors(t, n)?;
            let disp: Vec<[f64; 2]> = neighbors
                .iter()
                .map(|&j| {
                    let p = cloud.position(j);
                    [p[0] - t[0], p[1] - t[1]]
                })
                .collect();
            Stencil::new(t, neighbors, &disp, cfg, i)
        };
        let built: Vec<Result<Stencil>> = targets
            .par_iter()
            .enumerate()
            .map(|(i, &t)| {
                let mut n = cfg.n_b;
                loop {
                    match fit(i, t, n) {
                        Err(crate::error::Error::DegenerateGeometry { .. }) if widen && n < cloud.len() => {
                            n = (2 * n).min(cloud.len());
                        }
                        other => return other,
                    }
                }
            })
            .collect();
        // First failure in target order, independent of scheduling.
        let stencils = built.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Self {
            stencils,
            scale: [1.0, 1.0],
        })
    }

    pub fn len(&self) -> usize {
        self.stencils.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stencils.is_empty()
    }

    pub fn stencils(&self) -> &[Stencil] {
        &self.stencils
    }

    /// Coordinate scale the stencils were built in.
    pub fn scale(&self) -> [f64; 2] {
        self.scale
    }

    pub fn derivatives(&self, field: &[f64]) -> Vec<Derivatives> {
        let [sx, sy] = self.scale;
        self.stencils
            .par_iter()
            .map(|s| {
                let d = s.derivatives(field);
                Derivatives {
                    f: d.f,
                    f_x: d.f_x / sx,
                    f_y: d.f_y / sy,
                    f_xx: d.f_xx / (sx * sx),
                    f_yy: d.f_yy / (sy * sy),
                    f_xy: d.f_xy / (sx * sy),
                }
            })
            .collect()
    }

    pub fn values(&self, field: &[f64]) -> Vec<f64> {
        self.stencils.par_iter().map(|s| s.value(field)).collect()
    }

    pub fn gradients(&self, field: &[f64]) -> Vec<[f64; 2]> {
        let [sx, sy] = self.scale;
        self.stencils
            .par_iter()
            .map(|s| {
                let g = s.gradient(field);
                [g[0] / sx, g[1] / sy]
            })
            .collect()
    }

    /// Smallest and largest sample of `field` in each stencil.
    pub fn sample_ranges(&self, field: &[f64]) -> Vec<(f64, f64)> {
        self.stencils
            .par_iter()
            .map(|s| {
                s.neighbors
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &j| {
                        (lo.min(field[j]), hi.max(field[j]))
                    })
            })
            .collect()
    }
}

/// A cloud indexed and fitted in rescaled coordinates `(x / sx, y / sy)`.
///
/// On a lattice with spacings `(hx, hy)`, scaling by the spacings gives
/// square stencils; fits in raw coordinates on a strongly anisotropic lattice
/// pick neighbors from too few rows. Positions, targets and derivatives are
/// all exchanged in the original coordinates.
#[derive(Debug, Clone)]
pub struct ScaledCloud {
    cloud: PointCloud,
    scale: [f64; 2],
}

impl ScaledCloud {
    pub fn new(positions: &[[f64; 2]], scale: [f64; 2]) -> Result<Self> {
        if !(scale.iter().all(|s| *s > 0.0 && s.is_finite())) {
            return Err(crate::error::Error::Config(format!(
                "invalid coordinate scale {scale:?}"
            )));
        }
        let scaled = positions.iter().map(|&p| Self::apply(scale, p)).collect();
        Ok(Self {
            cloud: PointCloud::new(scaled)?,
            scale,
        })
    }

    fn apply(scale: [f64; 2], p: [f64; 2]) -> [f64; 2] {
        [p[0] / scale[0], p[1] / scale[1]]
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn scale(&self) -> [f64; 2] {
        self.scale
    }

    /// The underlying cloud, in scaled coordinates.
    pub fn inner(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn stencils_at_cloud(&self, cfg: &MwlsConfig) -> Result<StencilSet> {
        let mut set = StencilSet::at_cloud(&self.cloud, cfg)?;
        set.scale = self.scale;
        Ok(set)
    }

    /// Stencils at every point, widened where the geometry is degenerate.
    pub fn stencils_at_cloud_widening(&self, cfg: &MwlsConfig) -> Result<StencilSet> {
        let mut set = StencilSet::at_targets_widening(&self.cloud, self.cloud.positions(), cfg)?;
        set.scale = self.scale;
        Ok(set)
    }

    pub fn stencils_at(&self, targets: &[[f64; 2]], cfg: &MwlsConfig) -> Result<StencilSet> {
        let scaled: Vec<[f64; 2]> = targets.iter().map(|&t| Self::apply(self.scale, t)).collect();
        let mut set = StencilSet::at_targets(&self.cloud, &scaled, cfg)?;
        set.scale = self.scale;
        Ok(set)
    }

    /// Nearest point and its distance, measured in scaled coordinates.
    pub fn nearest(&self, target: [f64; 2]) -> Option<(usize, f64)> {
        self.cloud.nearest(Self::apply(self.scale, target))
    }
}

/// Value and derivatives of `values` at every cloud point, in cloud order.
pub fn differentiate_field(cloud: &PointCloud, values: &[f64], cfg: &MwlsConfig) -> Result<Vec<Derivatives>> {
    check_aligned(cloud, values)?;
    Ok(StencilSet::at_cloud(cloud, cfg)?.derivatives(values))
}

/// Interpolated values and an extrapolation flag per target.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolated {
    pub values: Vec<f64>,
    /// True where the target lies outside the cloud's convex hull.
    pub extrapolated: Vec<bool>,
}

/// Evaluates the local fit centered at each target.
pub fn interpolate_to(
    cloud: &PointCloud,
    values: &[f64],
    cfg: &MwlsConfig,
    targets: &[[f64; 2]],
) -> Result<Interpolated> {
    check_aligned(cloud, values)?;
    let set = StencilSet::at_targets(cloud, targets, cfg)?;
    let hull = cloud.convex_hull();
    Ok(Interpolated {
        values: set.values(values),
        extrapolated: targets.iter().map(|&t| !inside_convex(&hull, t)).collect(),
    })
}

fn check_aligned(cloud: &PointCloud, values: &[f64]) -> Result<()> {
    if cloud.len() != values.len() {
        return Err(crate::error::Error::Config(format!(
            "{} values supplied for a cloud of {} points",
            values.len(),
            cloud.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::*;

    fn jittered_grid(n: usize, h: f64, seed: u64) -> Vec<[f64; 2]> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut pts = Vec::new();
        for j in 0..n {
            for i in 0..n {
                pts.push([
                    (i as f64 - n as f64 / 2.0) * h + rng.random_range(-0.3..0.3) * h,
                    (j as f64 - n as f64 / 2.0) * h + rng.random_range(-0.3..0.3) * h,
                ]);
            }
        }
        pts
    }

    #[test]
    fn linear_field_everywhere() {
        let cloud = PointCloud::new(jittered_grid(15, 0.1, 1)).unwrap();
        let values: Vec<f64> = cloud.positions().iter().map(|p| 2.0 * p[0] - 3.0 * p[1]).collect();
        for d in differentiate_field(&cloud, &values, &MwlsConfig::default()).unwrap() {
            assert!((d.f_x - 2.0).abs() < 1e-9);
            assert!((d.f_y + 3.0).abs() < 1e-9);
            assert!(d.f_xx.abs() < 1e-9 && d.f_yy.abs() < 1e-9 && d.f_xy.abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_log_density_curvatures() {
        let (beta, alpha) = (4.5, 9.112);
        let cloud = PointCloud::new(jittered_grid(21, 0.08, 2)).unwrap();
        let values: Vec<f64> = cloud
            .positions()
            .iter()
            .map(|p| -2.0 * beta * p[0] * p[0] - alpha * p[1] * p[1])
            .collect();
        let derivs = differentiate_field(&cloud, &values, &MwlsConfig::default()).unwrap();
        for (p, d) in cloud.positions().iter().zip(&derivs) {
            if p[0].abs() < 0.5 && p[1].abs() < 0.5 {
                assert!((d.f_xx / (-4.0 * beta) - 1.0).abs() < 1e-3);
                assert!((d.f_yy / (-2.0 * alpha) - 1.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn collinear_cloud_reports_point() {
        let pts: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 2.0 * i as f64]).collect();
        let cloud = PointCloud::new(pts).unwrap();
        let err = differentiate_field(&cloud, &[1.0; 10], &MwlsConfig::with_neighbors(10)).unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry { index: 0, .. }), "{err}");
    }

    #[test]
    fn interpolation_at_sample_points_and_outside() {
        let cloud = PointCloud::new(jittered_grid(15, 0.02, 4)).unwrap();
        let f = |p: [f64; 2]| (p[0] * 1.3).sin() * (p[1] * 0.7).cos();
        let values: Vec<f64> = cloud.positions().iter().map(|&p| f(p)).collect();
        let targets = vec![cloud.position(100), cloud.position(57), [5.0, 5.0]];
        let out = interpolate_to(&cloud, &values, &MwlsConfig::default(), &targets).unwrap();
        assert!((out.values[0] - values[100]).abs() < 1e-6);
        assert!((out.values[1] - values[57]).abs() < 1e-6);
        assert_eq!(out.extrapolated, vec![false, false, true]);
        assert!(out.values[2].is_finite());
    }

    #[test]
    fn scaled_cloud_returns_physical_derivatives() {
        let pts: Vec<[f64; 2]> = jittered_grid(15, 0.1, 7)
            .into_iter()
            .map(|p| [p[0], 6.0 * p[1]])
            .collect();
        let f = |p: [f64; 2]| 0.5 * p[0] * p[0] * p[1] - 2.0 * p[1] * p[1] + p[0];
        let values: Vec<f64> = pts.iter().map(|&p| f(p)).collect();
        let sc = ScaledCloud::new(&pts, [1.0, 6.0]).unwrap();
        let set = sc.stencils_at(&[[0.05, 0.3]], &MwlsConfig::default()).unwrap();
        let d = set.derivatives(&values)[0];
        let (x, y) = (0.05, 0.3);
        assert!((d.f - f([x, y])).abs() < 1e-9);
        assert!((d.f_x - (x * y + 1.0)).abs() < 1e-9);
        assert!((d.f_y - (0.5 * x * x - 4.0 * y)).abs() < 1e-9);
        assert!((d.f_xx - y).abs() < 1e-8);
        assert!((d.f_yy + 4.0).abs() < 1e-8);
        assert!((d.f_xy - x).abs() < 1e-8);
        let g = set.gradients(&values)[0];
        assert!((g[1] - d.f_y).abs() < 1e-12);
        let (lo, hi) = set.sample_ranges(&values)[0];
        assert!(lo <= hi);
        assert!(sc.nearest([0.0, 0.0]).unwrap().1 < 0.1);
    }

    #[test]
    fn misaligned_values_rejected() {
        let cloud = PointCloud::new(jittered_grid(5, 0.1, 4)).unwrap();
        assert!(differentiate_field(&cloud, &[0.0; 3], &MwlsConfig::with_neighbors(10)).is_err());
    }

    fn cubic(c: &[f64; 10], p: [f64; 2]) -> f64 {
        basis(p[0], p[1]).iter().zip(c).map(|(b, c)| b * c).sum()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn translation_equivariance(shift in prop::array::uniform2(-50.0f64..50.0), seed in 0u64..1000) {
            let pts = jittered_grid(8, 0.1, seed);
            let values: Vec<f64> = pts.iter().map(|p| (3.0 * p[0]).exp() * p[1].cos()).collect();
            let cfg = MwlsConfig::with_neighbors(20);
            let a = differentiate_field(&PointCloud::new(pts.clone()).unwrap(), &values, &cfg).unwrap();
            let moved: Vec<[f64; 2]> = pts.iter().map(|p| [p[0] + shift[0], p[1] + shift[1]]).collect();
            let b = differentiate_field(&PointCloud::new(moved).unwrap(), &values, &cfg).unwrap();
            for (x, y) in a.iter().zip(&b) {
                let scale = x.f_xx.abs().max(x.f_yy.abs()).max(1.0);
                // Shifted coordinates lose digits when the shift is large.
                let tol = 1e-6 * scale * (1.0 + shift[0].abs().max(shift[1].abs()));
                prop_assert!((x.f_x - y.f_x).abs() < tol);
                prop_assert!((x.f_yy - y.f_yy).abs() < 1e2 * tol);
            }
        }

        #[test]
        fn weight_invariance_for_cubics(
            coeffs in prop::array::uniform10(-2.0f64..2.0),
            scale in 0.2f64..3.0,
            seed in 0u64..1000,
        ) {
            let pts = jittered_grid(7, 0.2, seed);
            let cloud = PointCloud::new(pts).unwrap();
            let values: Vec<f64> = cloud.positions().iter().map(|&p| cubic(&coeffs, p)).collect();
            let base = differentiate_field(&cloud, &values, &MwlsConfig { n_b: 16, weight_scale: 0.8 }).unwrap();
            let other = differentiate_field(&cloud, &values, &MwlsConfig { n_b: 16, weight_scale: scale }).unwrap();
            for (x, y) in base.iter().zip(&other) {
                prop_assert!((x.f_xy - y.f_xy).abs() < 1e-8);
                prop_assert!((x.f - y.f).abs() < 1e-9);
            }
        }

        #[test]
        fn deterministic(seed in 0u64..1000) {
            let cloud = PointCloud::new(jittered_grid(8, 0.1, seed)).unwrap();
            let values: Vec<f64> = cloud.positions().iter().map(|p| p[0].sin() + p[1]).collect();
            let a = differentiate_field(&cloud, &values, &MwlsConfig::with_neighbors(12)).unwrap();
            let b = differentiate_field(&cloud, &values, &MwlsConfig::with_neighbors(12)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
