use nalgebra::Vector2;

use super::{DensityField, Jet, PointCloud};
use crate::error::{FilamentError, Result};
use crate::kernel::{Kernel, KernelJet};

/// Kernel density estimate with derivatives, backed by a uniform cell grid.
///
/// Cells are `h` wide, so every sample within `h` of a query lies in the 3x3
/// block of cells around it. Samples are stored sorted by cell (CSR layout).
#[derive(Debug, Clone)]
pub struct KdeField {
    h: f64,
    n: usize,
    origin: [f64; 2],
    cell: f64,
    dims: [usize; 2],
    starts: Vec<u32>,
    sorted: Vec<[f64; 2]>,
    cloud: PointCloud,
}

/// Upper bound on grid cells per sample; wider clouds get coarser cells.
const MAX_CELLS_PER_POINT: usize = 16;

impl KdeField {
    pub fn new(cloud: PointCloud, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(FilamentError::Bandwidth(h));
        }
        let pts = cloud.points();
        let n = pts.len();
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in pts {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        // Cell size h, unless outliers would blow the grid up; any size >= h
        // keeps the 3x3 neighbourhood sufficient.
        let mut cell = h;
        let extent = |c: f64| [((hi[0] - lo[0]) / c) as usize + 1, ((hi[1] - lo[1]) / c) as usize + 1];
        let budget = MAX_CELLS_PER_POINT * n + 1024;
        while extent(cell)[0].saturating_mul(extent(cell)[1]) > budget {
            cell *= 2.0;
        }
        let dims = extent(cell);
        let cell_of = |p: &Vector2<f64>| {
            let i = (((p[0] - lo[0]) / cell) as usize).min(dims[0] - 1);
            let j = (((p[1] - lo[1]) / cell) as usize).min(dims[1] - 1);
            j * dims[0] + i
        };
        let ncell = dims[0] * dims[1];
        let mut counts = vec![0u32; ncell + 1];
        let ids: Vec<usize> = pts.iter().map(cell_of).collect();
        for &c in &ids {
            counts[c + 1] += 1;
        }
        for c in 0..ncell {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        let mut sorted = vec![[0.0; 2]; n];
        for (p, &c) in pts.iter().zip(&ids) {
            sorted[fill[c] as usize] = [p[0], p[1]];
            fill[c] += 1;
        }
        Ok(Self { h, n, origin: lo, cell, dims, starts: counts, sorted, cloud })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    /// Sum over every sample, no index. Reference for the binned path.
    pub fn eval_naive(&self, x: Vector2<f64>) -> Jet {
        let mut acc = KernelJet::default();
        for p in self.cloud.points() {
            add(&mut acc, &Kernel.jet([(x[0] - p[0]) / self.h, (x[1] - p[1]) / self.h]));
        }
        self.scale(acc)
    }

    fn scale(&self, a: KernelJet) -> Jet {
        let s0 = 1.0 / (self.n as f64 * self.h * self.h);
        let s1 = s0 / self.h;
        let s2 = s1 / self.h;
        let s3 = s2 / self.h;
        Jet::from_parts(
            s0 * a.k,
            a.d1.map(|v| s1 * v),
            a.d2.map(|v| s2 * v),
            a.d3.map(|v| s3 * v),
        )
    }
}

#[inline]
fn add(acc: &mut KernelJet, j: &KernelJet) {
    acc.k += j.k;
    for a in 0..2 {
        acc.d1[a] += j.d1[a];
    }
    for a in 0..3 {
        acc.d2[a] += j.d2[a];
    }
    for a in 0..4 {
        acc.d3[a] += j.d3[a];
    }
}

impl DensityField for KdeField {
    fn eval_all(&self, x: Vector2<f64>) -> Jet {
        let gx = ((x[0] - self.origin[0]) / self.cell).floor();
        let gy = ((x[1] - self.origin[1]) / self.cell).floor();
        let (nx, ny) = (self.dims[0] as f64, self.dims[1] as f64);
        if !(gx >= -1.0 && gy >= -1.0 && gx <= nx && gy <= ny) {
            return Jet::zero();
        }
        let i0 = (gx - 1.0).max(0.0) as usize;
        let i1 = ((gx + 1.0).min(nx - 1.0)) as usize;
        let j0 = (gy - 1.0).max(0.0) as usize;
        let j1 = ((gy + 1.0).min(ny - 1.0)) as usize;
        let inv_h = 1.0 / self.h;
        let mut acc = KernelJet::default();
        for j in j0..=j1 {
            let row = j * self.dims[0];
            let lo = self.starts[row + i0] as usize;
            let hi = self.starts[row + i1 + 1] as usize;
            for p in &self.sorted[lo..hi] {
                let z = [(x[0] - p[0]) * inv_h, (x[1] - p[1]) * inv_h];
                if z[0] * z[0] + z[1] * z[1] < 1.0 {
                    add(&mut acc, &Kernel.jet(z));
                }
            }
        }
        self.scale(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::AnalyticModel;
    use std::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn close(a: &Jet, b: &Jet, tol: f64) -> bool {
        let scale = |j: &Jet| j.f.abs() + j.grad.norm() + j.d2.norm() + j.grad_d2.norm();
        let s = scale(a).max(scale(b)).max(1e-300);
        (a.f - b.f).abs() / s < tol
            && (a.grad - b.grad).norm() / s < tol
            && (a.d2 - b.d2).norm() / s < tol
            && (a.grad_d2 - b.grad_d2).norm() / s < tol
    }

    #[test]
    fn single_point_at_its_own_location() {
        let cloud = PointCloud::new(vec![Vector2::zeros()]).unwrap();
        let kde = KdeField::new(cloud, 1.0).unwrap();
        assert!(rel(kde.f(Vector2::zeros()), 6.0 / PI) < 1e-15);
    }

    #[test]
    fn rejects_bad_bandwidth() {
        let cloud = PointCloud::new(vec![Vector2::zeros()]).unwrap();
        assert!(KdeField::new(cloud.clone(), 0.0).is_err());
        assert!(KdeField::new(cloud, f64::NAN).is_err());
    }

    #[test]
    fn empty_neighbourhood_is_zero() {
        let cloud = PointCloud::new(vec![Vector2::zeros(), Vector2::new(0.1, 0.0)]).unwrap();
        let kde = KdeField::new(cloud, 0.5).unwrap();
        assert_eq!(kde.eval_all(Vector2::new(3.0, 3.0)), Jet::zero());
        assert_eq!(kde.eval_all(Vector2::new(0.0, 0.55)).f, 0.0);
        assert_eq!(kde.eval_all(Vector2::new(-1e6, 0.0)), Jet::zero());
    }

    #[test]
    fn binned_matches_naive() {
        let m = AnalyticModel::ring(1.0, 0.1).unwrap();
        let cloud = m.sample(1000, 3);
        let kde = KdeField::new(cloud, 0.3).unwrap();
        for k in 0..50 {
            let t = k as f64 * 0.77;
            let r = 0.5 + 0.02 * k as f64;
            let x = Vector2::new(r * t.cos(), r * t.sin());
            assert!(close(&kde.eval_all(x), &kde.eval_naive(x), 1e-12), "at {x}");
        }
    }

    #[test]
    fn outlier_coarsens_grid_without_changing_values() {
        let mut pts: Vec<_> = (0..50).map(|i| Vector2::new(0.01 * i as f64, 0.0)).collect();
        pts.push(Vector2::new(1e4, 1e4));
        let kde = KdeField::new(PointCloud::new(pts).unwrap(), 0.05).unwrap();
        assert!(kde.cell > kde.h);
        for x in [Vector2::new(0.2, 0.01), Vector2::new(1e4, 1e4 + 0.01)] {
            assert!(close(&kde.eval_all(x), &kde.eval_naive(x), 1e-12));
        }
    }

    #[test]
    fn derivative_normalisation_scales_with_bandwidth() {
        let cloud = PointCloud::new(vec![Vector2::zeros()]).unwrap();
        let x = Vector2::new(0.1, 0.05);
        let a = KdeField::new(cloud.clone(), 0.5).unwrap();
        let b = KdeField::new(cloud, 1.0).unwrap();
        // Same kernel argument at twice the bandwidth and twice the offset.
        let ja = a.eval_all(x);
        let jb = b.eval_all(2.0 * x);
        assert!(rel(ja.f, 4.0 * jb.f) < 1e-13);
        assert!((ja.grad - 8.0 * jb.grad).norm() < 1e-12 * ja.grad.norm());
        assert!((ja.d2 - 16.0 * jb.d2).norm() < 1e-12 * ja.d2.norm());
        assert!((ja.grad_d2 - 32.0 * jb.grad_d2).norm() < 1e-12 * ja.grad_d2.norm());
    }
}
