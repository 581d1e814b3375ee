use std::f64::consts::PI;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DensityField, Jet, PointCloud};
use crate::error::{FilamentError, Result};
use crate::quadrature::gauss_legendre;

/// Ground-truth densities with closed-form derivatives and a known filament.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticModel {
    /// Centred Gaussian with standard deviations `sigma1 > sigma2` along the
    /// axes. Its filament is the `x1` axis.
    ElongatedGaussian { sigma1: f64, sigma2: f64 },
    /// Radial profile `C exp(-(r - r0)^2 / (2 s^2))`. Its filament is the
    /// circle `r = r0`, where the radial derivative vanishes.
    Ring { r0: f64, s: f64, norm: f64 },
}

impl AnalyticModel {
    pub fn elongated_gaussian(sigma1: f64, sigma2: f64) -> Result<Self> {
        if !(sigma1 > sigma2 && sigma2 > 0.0 && sigma1.is_finite()) {
            return Err(FilamentError::InvalidParameter(format!(
                "elongated gaussian needs sigma1 > sigma2 > 0, got ({sigma1}, {sigma2})"
            )));
        }
        Ok(Self::ElongatedGaussian { sigma1, sigma2 })
    }

    pub fn ring(r0: f64, s: f64) -> Result<Self> {
        if !(s > 0.0 && r0 > 3.0 * s && r0.is_finite()) {
            return Err(FilamentError::InvalidParameter(format!(
                "ring needs r0 > 3 s > 0, got r0 = {r0}, s = {s}"
            )));
        }
        Ok(Self::Ring { r0, s, norm: 1.0 / ring_mass(r0, s) })
    }

    /// Draw `n` points from a generator seeded with `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> PointCloud {
        self.sample_with(n, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PointCloud {
        let mut pts = Vec::with_capacity(n);
        match *self {
            Self::ElongatedGaussian { sigma1, sigma2 } => {
                for _ in 0..n {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    pts.push(Vector2::new(sigma1 * a, sigma2 * b));
                }
            }
            Self::Ring { r0, s, .. } => {
                // Radius has density proportional to r exp(-(r-r0)^2/2s^2):
                // propose from the Gaussian, accept with probability r / r_max.
                let r_max = r0 + 10.0 * s;
                while pts.len() < n {
                    let z: f64 = rng.sample(StandardNormal);
                    let r = r0 + s * z;
                    let u: f64 = rng.random();
                    if r <= 0.0 || r > r_max || u * r_max > r {
                        continue;
                    }
                    let t: f64 = rng.random::<f64>() * 2.0 * PI;
                    pts.push(Vector2::new(r * t.cos(), r * t.sin()));
                }
            }
        }
        PointCloud::new(pts).expect("n >= 1 finite samples")
    }

    /// A point of the true filament, parametrised by `t`: the `x1` coordinate
    /// for the Gaussian, the angle for the ring.
    pub fn filament_point(&self, t: f64) -> Vector2<f64> {
        match *self {
            Self::ElongatedGaussian { .. } => Vector2::new(t, 0.0),
            Self::Ring { .. } => {
                let r = self.ring_ridge_radius();
                Vector2::new(r * t.cos(), r * t.sin())
            }
        }
    }

    /// Radius where the radial derivative of the ring profile vanishes.
    pub fn ring_ridge_radius(&self) -> f64 {
        match *self {
            Self::Ring { r0, .. } => r0,
            Self::ElongatedGaussian { .. } => f64::NAN,
        }
    }
}

/// `int_0^inf 2 pi r exp(-(r - r0)^2 / 2 s^2) dr` by panelled Gauss–Legendre.
fn ring_mass(r0: f64, s: f64) -> f64 {
    let (x, w) = gauss_legendre(20);
    let (a, b) = ((r0 - 12.0 * s).max(0.0), r0 + 12.0 * s);
    let panels = 48;
    let step = (b - a) / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        let lo = a + k as f64 * step;
        for (xi, wi) in x.iter().zip(&w) {
            let r = lo + 0.5 * step * (xi + 1.0);
            acc += 0.5 * step * wi * r * (-(r - r0).powi(2) / (2.0 * s * s)).exp();
        }
    }
    // Mass below r0 - 12 s is under e^-72 and is skipped.
    2.0 * PI * acc
}

/// `(g, g', g'', g''')` for the centred normal density with scale `s`.
fn normal_jet(x: f64, s: f64) -> [f64; 4] {
    let s2 = s * s;
    let g = (-0.5 * x * x / s2).exp() / ((2.0 * PI).sqrt() * s);
    let u = x / s2;
    [g, -u * g, (u * u - 1.0 / s2) * g, (-u * u * u + 3.0 * u / s2) * g]
}

impl DensityField for AnalyticModel {
    fn eval_all(&self, x: Vector2<f64>) -> Jet {
        match *self {
            Self::ElongatedGaussian { sigma1, sigma2 } => {
                let a = normal_jet(x[0], sigma1);
                let b = normal_jet(x[1], sigma2);
                Jet::from_parts(
                    a[0] * b[0],
                    [a[1] * b[0], a[0] * b[1]],
                    [a[2] * b[0], a[1] * b[1], a[0] * b[2]],
                    [a[3] * b[0], a[2] * b[1], a[1] * b[2], a[0] * b[3]],
                )
            }
            Self::Ring { r0, s, norm } => ring_jet(x, r0, s, norm),
        }
    }
}

/// Cartesian derivatives of a radial profile `F(r)` by the chain rule, with
/// `n = x / r`, `r_ij = (d_ij - n_i n_j) / r` and
/// `r_ijk = (3 n_i n_j n_k - d_ij n_k - d_ik n_j - d_jk n_i) / r^2`.
fn ring_jet(x: Vector2<f64>, r0: f64, s: f64, norm: f64) -> Jet {
    let r = x.norm();
    let s2 = s * s;
    let d = r - r0;
    let f = norm * (-d * d / (2.0 * s2)).exp();
    if r < 1e-12 {
        return Jet { f, ..Jet::zero() };
    }
    let f1 = -d / s2 * f;
    let f2 = (d * d / (s2 * s2) - 1.0 / s2) * f;
    let f3 = (-d * d * d / (s2 * s2 * s2) + 3.0 * d / (s2 * s2)) * f;
    let n = [x[0] / r, x[1] / r];
    let dl = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    let r2 = |i: usize, j: usize| (dl(i, j) - n[i] * n[j]) / r;
    let r3 = |i: usize, j: usize, k: usize| {
        (3.0 * n[i] * n[j] * n[k] - dl(i, j) * n[k] - dl(i, k) * n[j] - dl(j, k) * n[i]) / (r * r)
    };
    let second = |i, j| f2 * n[i] * n[j] + f1 * r2(i, j);
    let third = |i, j, k| {
        f3 * n[i] * n[j] * n[k]
            + f2 * (r2(i, k) * n[j] + r2(j, k) * n[i] + r2(i, j) * n[k])
            + f1 * r3(i, j, k)
    };
    Jet::from_parts(
        f,
        [f1 * n[0], f1 * n[1]],
        [second(0, 0), second(0, 1), second(1, 1)],
        [third(0, 0, 0), third(0, 0, 1), third(0, 1, 1), third(1, 1, 1)],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::PlaneRule;

    /// Largest gap between each analytic partial and a fourth-order central
    /// difference of the partial one order below, at step 1e-4.
    fn fd_check(m: &AnalyticModel, x: Vector2<f64>) -> f64 {
        let e = 1e-4;
        let d = |axis: usize, get: &dyn Fn(&Jet) -> f64| {
            let mut u = Vector2::zeros();
            u[axis] = e;
            let j = |k: f64| get(&m.eval_all(x + k * u));
            (-j(2.0) + 8.0 * j(1.0) - 8.0 * j(-1.0) + j(-2.0)) / (12.0 * e)
        };
        let j = m.eval_all(x);
        let mut err: f64 = 0.0;
        err = err.max((d(0, &|q| q.f) - j.grad[0]).abs());
        err = err.max((d(1, &|q| q.f) - j.grad[1]).abs());
        err = err.max((d(0, &|q| q.grad[0]) - j.d2[0]).abs());
        err = err.max((d(1, &|q| q.grad[0]) - j.d2[1]).abs());
        err = err.max((d(1, &|q| q.grad[1]) - j.d2[2]).abs());
        for a in 0..3 {
            err = err.max((d(0, &|q| q.d2[a]) - j.grad_d2[(a, 0)]).abs());
            err = err.max((d(1, &|q| q.d2[a]) - j.grad_d2[(a, 1)]).abs());
        }
        err
    }

    #[test]
    fn parameter_validation() {
        assert!(AnalyticModel::elongated_gaussian(1.0, 1.0).is_err());
        assert!(AnalyticModel::elongated_gaussian(1.0, 2.0).is_err());
        assert!(AnalyticModel::ring(0.3, 0.1).is_err());
        assert!(AnalyticModel::ring(1.0, 0.0).is_err());
    }

    #[test]
    fn gaussian_hessian_at_centre() {
        let m = AnalyticModel::elongated_gaussian(2.0, 1.0).unwrap();
        let j = m.eval_all(Vector2::zeros());
        assert_eq!(j.grad, Vector2::zeros());
        assert!((j.d2[0] + j.f / 4.0).abs() < 1e-15);
        assert_eq!(j.d2[1], 0.0);
        assert!((j.d2[2] + j.f).abs() < 1e-15);
        assert_eq!(j.grad_d2, nalgebra::Matrix3x2::zeros());
    }

    #[test]
    fn ring_gradient_vanishes_on_the_circle() {
        let m = AnalyticModel::ring(1.0, 0.1).unwrap();
        let j = m.eval_all(Vector2::new(1.0, 0.0));
        assert!(j.grad.norm() < 1e-14);
        assert!(j.d2[0] < 0.0 && j.d2[2] > j.d2[0]);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let g = AnalyticModel::elongated_gaussian(2.0, 1.0).unwrap();
        let r = AnalyticModel::ring(1.0, 0.1).unwrap();
        for k in 0..200 {
            let t = k as f64 * 2.399;
            let x = Vector2::new(3.0 * (0.37 * k as f64).sin(), 1.5 * (0.91 * k as f64).cos());
            assert!(fd_check(&g, x) < 1e-5, "gaussian at {x}");
            let rad = 0.7 + 0.6 * (k as f64 / 200.0);
            let y = Vector2::new(rad * t.cos(), rad * t.sin());
            assert!(fd_check(&r, y) < 1e-5, "ring at {y}: {}", fd_check(&r, y));
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        let r = AnalyticModel::ring(1.0, 0.1).unwrap();
        // Polar rule on the disk of radius 2.5, split in radius to resolve the ring.
        let mut total = 0.0;
        let (x, w) = gauss_legendre(40);
        let panels = 50;
        for p in 0..panels {
            let lo = 2.5 * p as f64 / panels as f64;
            let step = 2.5 / panels as f64;
            for (xi, wi) in x.iter().zip(&w) {
                let rr = lo + 0.5 * step * (xi + 1.0);
                total += 0.5 * step * wi * rr * 2.0 * PI * r.f(Vector2::new(rr, 0.0));
            }
        }
        assert!((total - 1.0).abs() < 1e-8, "{total}");
        let g = AnalyticModel::elongated_gaussian(0.5, 0.25).unwrap();
        let rule = PlaneRule::disk(60, 120);
        let mass = rule.integrate(|z| 9.0 * g.f(Vector2::new(3.0 * z[0], 3.0 * z[1])));
        assert!((mass - 1.0).abs() < 1e-8, "{mass}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let r = AnalyticModel::ring(1.0, 0.1).unwrap();
        assert_eq!(r.sample(500, 9), r.sample(500, 9));
        assert_ne!(r.sample(500, 9), r.sample(500, 10));
    }

    #[test]
    fn gaussian_sample_covariance() {
        let g = AnalyticModel::elongated_gaussian(2.0, 1.0).unwrap();
        let c = g.sample(100_000, 1);
        let n = c.n() as f64;
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for p in c.points() {
            sxx += p[0] * p[0];
            syy += p[1] * p[1];
            sxy += p[0] * p[1];
        }
        assert!((sxx / n / 4.0 - 1.0).abs() < 0.05);
        assert!((syy / n - 1.0).abs() < 0.05);
        assert!((sxy / n).abs() < 0.05);
    }

    #[test]
    fn ring_mean_radius() {
        let m = AnalyticModel::ring(1.0, 0.1).unwrap();
        let c = m.sample(100_000, 2);
        let mean: f64 = c.points().iter().map(|p| p.norm()).sum::<f64>() / c.n() as f64;
        // E r = int r^2 e^{..} / int r e^{..}; for r0 = 1, s = 0.1 this is r0 + s^2 / r0.
        let (x, w) = gauss_legendre(60);
        let (mut num, mut den) = (0.0, 0.0);
        for (xi, wi) in x.iter().zip(&w) {
            let r = 1.0 + 0.8 * xi;
            let e = (-(r - 1.0f64).powi(2) / 0.02).exp();
            num += wi * r * r * e;
            den += wi * r * e;
        }
        assert!((mean - num / den).abs() < 0.01, "{mean} vs {}", num / den);
    }
}
