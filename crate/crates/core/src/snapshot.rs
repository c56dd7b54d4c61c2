//! Hydrodynamic fields sampled on a uniform rectangular mesh at one time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// A uniform rectangular mesh. Point `(i, j)` sits at
/// `origin + (i * spacing[0], j * spacing[1])`; storage is row-major in `y`
/// then `x`, i.e. index `j * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

impl Mesh {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
        ]
    }

    pub fn point_at(&self, index: usize) -> [f64; 2] {
        self.point(index % self.nx, index / self.nx)
    }

    pub fn points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.len()).map(|k| self.point_at(k))
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing[0] * self.spacing[1]
    }

    /// Whether two meshes describe the same lattice.
    pub fn same_as(&self, other: &Mesh) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && (0..2).all(|d| {
                let tol = 1e-12 * self.spacing[d].abs().max(1.0);
                (self.origin[d] - other.origin[d]).abs() <= tol && (self.spacing[d] - other.spacing[d]).abs() <= tol
            })
    }
}

/// Which engine produced a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Qtm,
    Oracle,
}

impl Source {
    pub fn label(self) -> &'static str {
        match self {
            Source::Qtm => "qtm",
            Source::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "qtm" => Ok(Source::Qtm),
            "oracle" => Ok(Source::Oracle),
            other => Err(format!("unknown source {other:?}")),
        }
    }
}

/// Density, velocity and action on a mesh.
///
/// Points not carrying a fluid element have `rho = 0` and NaN velocity and
/// action. The reference solver never reconstructs the action, so `s` is NaN
/// throughout its snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub time: f64,
    pub source: Source,
    pub mesh: Mesh,
    pub rho: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub s: Vec<f64>,
    /// Run bookkeeping carried into the file header (renormalization factor,
    /// dropped mass, element count, ...).
    pub metadata: BTreeMap<String, f64>,
}

impl FieldSnapshot {
    pub fn empty(time: f64, source: Source, mesh: Mesh) -> Self {
        let n = mesh.len();
        Self {
            time,
            source,
            mesh,
            rho: vec![0.0; n],
            vx: vec![f64::NAN; n],
            vy: vec![f64::NAN; n],
            s: vec![f64::NAN; n],
            metadata: BTreeMap::new(),
        }
    }

    pub fn velocity(&self, k: usize) -> [f64; 2] {
        [self.vx[k], self.vy[k]]
    }

    /// Midpoint-rule integral of the density.
    pub fn norm(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.mesh.cell_area()
    }

    pub fn peak_density(&self) -> f64 {
        self.rho.iter().copied().fold(0.0, f64::max)
    }

    /// Indices of points with `rho > threshold` and a defined velocity.
    pub fn evaluated_points(&self, threshold: f64) -> Vec<usize> {
        (0..self.mesh.len())
            .filter(|&k| self.rho[k] > threshold && self.vx[k].is_finite() && self.vy[k].is_finite())
            .collect()
    }

    /// Bilinear interpolation of a mesh field; `None` outside the mesh or
    /// where a corner value is undefined.
    pub fn bilinear(&self, field: &[f64], point: [f64; 2]) -> Option<f64> {
        bilinear(&self.mesh, field, point, false)
    }

    /// Mesh index closest to `point`, if the point lies within the mesh.
    pub fn nearest_index(&self, point: [f64; 2]) -> Option<usize> {
        let m = &self.mesh;
        let fi = ((point[0] - m.origin[0]) / m.spacing[0]).round();
        let fj = ((point[1] - m.origin[1]) / m.spacing[1]).round();
        if fi < 0.0 || fj < 0.0 || fi >= m.nx as f64 || fj >= m.ny as f64 {
            return None;
        }
        Some(m.index(fi as usize, fj as usize))
    }
}

/// Bilinear interpolation on `mesh`. With `periodic`, coordinates wrap and
/// the mesh is treated as one period of an infinite lattice.
pub fn bilinear(mesh: &Mesh, field: &[f64], point: [f64; 2], periodic: bool) -> Option<f64> {
    let fx = (point[0] - mesh.origin[0]) / mesh.spacing[0];
    let fy = (point[1] - mesh.origin[1]) / mesh.spacing[1];
    let (i0, tx) = (fx.floor(), fx - fx.floor());
    let (j0, ty) = (fy.floor(), fy - fy.floor());
    let (nx, ny) = (mesh.nx as i64, mesh.ny as i64);
    let corner = |di: i64, dj: i64| -> Option<f64> {
        let (mut i, mut j) = (i0 as i64 + di, j0 as i64 + dj);
        if periodic {
            i = i.rem_euclid(nx);
            j = j.rem_euclid(ny);
        }
        if i < 0 || j < 0 || i >= nx || j >= ny {
            return None;
        }
        let v = field[(j * nx + i) as usize];
        v.is_finite().then_some(v)
    };
    // Exact hits on the last row or column do not need the next cell.
    let w = [
        ((1.0 - tx) * (1.0 - ty), 0, 0),
        (tx * (1.0 - ty), 1, 0),
        ((1.0 - tx) * ty, 0, 1),
        (tx * ty, 1, 1),
    ];
    let mut acc = 0.0;
    for (wk, di, dj) in w {
        if wk == 0.0 {
            continue;
        }
        acc += wk * corner(di, dj)?;
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh() -> Mesh {
        Mesh {
            origin: [-1.0, -0.5],
            spacing: [0.5, 0.25],
            nx: 5,
            ny: 5,
        }
    }

    #[test]
    fn indexing_is_row_major_in_y_then_x() {
        let m = mesh();
        assert_eq!(m.index(3, 2), 13);
        assert_eq!(m.point_at(13), [0.5, 0.0]);
        assert_eq!(m.points().count(), 25);
    }

    #[test]
    fn bilinear_reproduces_linear_fields() {
        let m = mesh();
        let field: Vec<f64> = m.points().map(|p| 3.0 * p[0] - p[1] + 0.5).collect();
        for p in [[-0.3, 0.1], [0.99, 0.5], [1.0, 0.5], [-1.0, -0.5]] {
            let v = bilinear(&m, &field, p, false).unwrap();
            assert!((v - (3.0 * p[0] - p[1] + 0.5)).abs() < 1e-12, "{p:?}");
        }
        assert!(bilinear(&m, &field, [1.2, 0.0], false).is_none());
        assert!(bilinear(&m, &field, [1.2, 0.0], true).is_some());
    }

    #[test]
    fn norm_and_mask() {
        let mut s = FieldSnapshot::empty(0.0, Source::Qtm, mesh());
        s.rho[12] = 8.0;
        s.vx[12] = 0.0;
        s.vy[12] = 0.0;
        assert_eq!(s.norm(), 1.0);
        assert_eq!(s.evaluated_points(0.0), vec![12]);
        assert_eq!(s.nearest_index([0.1, 0.05]), Some(12));
    }
}
