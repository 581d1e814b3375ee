//! Confidence-band ingredients for the filament estimate.
//!
//! At a filament point `x`, with `G~ = grad G(d2 f(x))`:
//!
//! ```text
//! A     = G~^T grad f                     |A|_R = sqrt(A^T R A)
//! a'    = grad f^T (grad V) V + lambda2 |V|^2
//! g     = a' / (sqrt(f) |V| |A|_R)        W = A / a'
//! ```
//!
//! The band half-width at a vertex is `b_h(z) / (sqrt(n h^6) |g|)` with
//! `b_h(z) = sqrt(2 log(1/h)) + (z + c) / sqrt(2 log(1/h))`, and the constant
//! `c = log( sqrt(b2/2) / pi * int_L |Omega^(1/2) M_s| / |A|_R ds )`.

use nalgebra::{Matrix2, SymmetricEigen, Vector2, Vector3};
use serde::Serialize;

use crate::density::DensityField;
use crate::eigenfield::{g_tilde, DegeneracyGuard, EigenFrame};
use crate::error::{FilamentError, Result};
use crate::kernel::KernelConstants;
use crate::ridge::{a_tilde_prime, Polyline};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandIngredients {
    pub a_vec: Vector3<f64>,
    pub a_tilde_prime: f64,
    pub g: f64,
    pub w_vec: Vector3<f64>,
    pub norm_a_r: f64,
    pub f: f64,
    pub v_norm: f64,
}

pub fn ingredients_at<F: DensityField + ?Sized>(
    field: &F,
    x: Vector2<f64>,
    constants: &KernelConstants,
    guard: &DegeneracyGuard,
) -> Result<BandIngredients> {
    let jet = field.eval_all(x);
    let at = [x[0], x[1]];
    if !(jet.f > 0.0) {
        return Err(FilamentError::ZeroDensity(at));
    }
    let frame = EigenFrame::from_jet(&jet, guard, Some(x))?;
    let a_vec = g_tilde(&jet, guard, Some(x))?.transpose() * jet.grad;
    let norm_a_r = a_vec.dot(&(constants.r() * a_vec)).max(0.0).sqrt();
    if norm_a_r == 0.0 {
        return Err(FilamentError::FlatFilament(at));
    }
    let v_norm = frame.v.norm();
    let ap = a_tilde_prime(&jet, guard, Some(x))?;
    if ap == 0.0 || v_norm == 0.0 {
        return Err(FilamentError::ZeroSlope(at));
    }
    Ok(BandIngredients {
        a_vec,
        a_tilde_prime: ap,
        g: ap / (jet.f.sqrt() * v_norm * norm_a_r),
        w_vec: a_vec / ap,
        norm_a_r,
        f: jet.f,
        v_norm,
    })
}

/// The 2x2 matrix `Omega` built from `A` and `b1`.
pub fn omega_at(a: &Vector3<f64>, b1: f64) -> Matrix2<f64> {
    let w11 = b1 * a[0] * a[0] + a[1] * a[1] + a[2] * a[2] + 2.0 * a[0] * a[2];
    let w12 = 2.0 * a[0] * a[1] + 2.0 * a[1] * a[2];
    let w22 = b1 * a[2] * a[2] + a[1] * a[1] + a[0] * a[0] + 2.0 * a[0] * a[2];
    Matrix2::new(w11, w12, w12, w22)
}

/// Symmetric square root; negative rounding-level eigenvalues are clipped.
pub fn sqrt_psd(m: &Matrix2<f64>) -> Matrix2<f64> {
    let e = SymmetricEigen::new(*m);
    let d = Matrix2::from_diagonal(&e.eigenvalues.map(|l| l.max(0.0).sqrt()));
    e.eigenvectors * d * e.eigenvectors.transpose()
}

/// Unit tangents by central differences; one-sided at the ends of an open
/// polyline, wrapped when closed.
pub fn tangents(line: &Polyline) -> Result<Vec<Vector2<f64>>> {
    let p = line.points();
    let n = p.len();
    if n < 2 {
        return Err(FilamentError::ShortPolyline(2));
    }
    Ok((0..n)
        .map(|i| {
            let (a, b) = if line.closed {
                (p[(i + n - 1) % n], p[(i + 1) % n])
            } else {
                (p[i.saturating_sub(1)], p[(i + 1).min(n - 1)])
            };
            (b - a).normalize()
        })
        .collect())
}

/// Per-vertex integrand `|Omega^(1/2) M| / |A|_R`.
pub fn c_integrand<F: DensityField + ?Sized>(
    line: &Polyline,
    field: &F,
    constants: &KernelConstants,
    guard: &DegeneracyGuard,
) -> Result<Vec<f64>> {
    let tans = tangents(line)?;
    line.points()
        .iter()
        .zip(&tans)
        .map(|(x, m)| {
            let ing = ingredients_at(field, *x, constants, guard)?;
            let root = sqrt_psd(&omega_at(&ing.a_vec, constants.b1));
            Ok((root * m).norm() / ing.norm_a_r)
        })
        .collect()
}

/// Trapezoid rule over arc length, including the closing segment.
pub fn line_integral(line: &Polyline, values: &[f64]) -> f64 {
    let p = line.points();
    let n = p.len();
    let mut acc = 0.0;
    for i in 0..n.saturating_sub(1) {
        acc += 0.5 * (values[i] + values[i + 1]) * (p[i + 1] - p[i]).norm();
    }
    if line.closed && n > 2 {
        acc += 0.5 * (values[n - 1] + values[0]) * (p[0] - p[n - 1]).norm();
    }
    acc
}

pub fn constant_c<F: DensityField + ?Sized>(
    line: &Polyline,
    field: &F,
    constants: &KernelConstants,
    guard: &DegeneracyGuard,
) -> Result<f64> {
    let vals = c_integrand(line, field, constants, guard)?;
    let integral = line_integral(line, &vals);
    Ok(((constants.b2 / 2.0).sqrt() / std::f64::consts::PI * integral).ln())
}

pub fn b_h_of(z: f64, h: f64, c: f64) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(FilamentError::InvalidParameter(format!("b_h needs 0 < h < 1, got {h}")));
    }
    let r = (2.0 * (1.0 / h).ln()).sqrt();
    Ok(r + (z + c) / r)
}

/// `z` with `exp(-2 exp(-z)) = 1 - alpha`.
pub fn z_from_level(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FilamentError::InvalidParameter(format!("level must lie in (0, 1), got {alpha}")));
    }
    Ok(-(-0.5 * (1.0 - alpha).ln()).ln())
}

/// The limit law `exp(-2 exp(-z))`.
pub fn limit_cdf(z: f64) -> f64 {
    (-2.0 * (-z).exp()).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandResult {
    pub c: f64,
    pub b_h: f64,
    pub z: f64,
    pub h: f64,
    pub n: usize,
    pub g: Vec<f64>,
    pub radii: Vec<f64>,
}

pub fn band_radii<F: DensityField + ?Sized>(
    line: &Polyline,
    field: &F,
    constants: &KernelConstants,
    n: usize,
    h: f64,
    z: f64,
    guard: &DegeneracyGuard,
) -> Result<BandResult> {
    let c = constant_c(line, field, constants, guard)?;
    let b_h = b_h_of(z, h, c)?;
    let scale = (n as f64 * h.powi(6)).sqrt();
    let g: Vec<f64> = line
        .points()
        .iter()
        .map(|x| ingredients_at(field, *x, constants, guard).map(|i| i.g))
        .collect::<Result<_>>()?;
    let radii = g.iter().map(|g| b_h / (scale * g.abs())).collect();
    Ok(BandResult { c, b_h, z, h, n, g, radii })
}

/// Asymptotic standard deviation of the normal deviation at `x`:
/// `sqrt(f W^T R W / (n h^6))`.
pub fn pointwise_sd<F: DensityField + ?Sized>(
    field: &F,
    x: Vector2<f64>,
    constants: &KernelConstants,
    n: usize,
    h: f64,
    guard: &DegeneracyGuard,
) -> Result<f64> {
    let ing = ingredients_at(field, x, constants, guard)?;
    let w = ing.w_vec;
    Ok((ing.f * w.dot(&(constants.r() * w)) / (n as f64 * h.powi(6))).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{AnalyticModel, Jet};
    use crate::kernel::constants;
    use nalgebra::Matrix3x2;
    use proptest::prelude::*;

    fn axis(x0: f64, x1: f64, k: usize) -> Polyline {
        Polyline::open((0..=k).map(|i| Vector2::new(x0 + (x1 - x0) * i as f64 / k as f64, 0.0)).collect())
    }

    /// Fixed jet everywhere: constant `A` along any line.
    struct Frozen;
    impl DensityField for Frozen {
        fn eval_all(&self, _x: Vector2<f64>) -> Jet {
            Jet {
                f: 0.2,
                grad: Vector2::new(0.05, -0.02),
                d2: Vector3::new(-1.0, 0.3, -0.4),
                grad_d2: Matrix3x2::new(0.1, 0.2, 0.2, -0.1, -0.1, 0.3),
            }
        }
    }

    #[test]
    fn b_h_arithmetic() {
        assert!((b_h_of(0.0, (-1.0f64).exp(), 0.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let r = (2.0 * 10f64.ln()).sqrt();
        assert!((b_h_of(1.0, 0.1, 0.5).unwrap() - (r + 1.5 / r)).abs() < 1e-15);
        assert!((b_h_of(1.0, 0.1, 0.5).unwrap() - 2.8450).abs() < 1e-4);
        assert_eq!(b_h_of(-0.5, 0.3, 0.5).unwrap(), (2.0 * (1.0 / 0.3f64).ln()).sqrt());
        assert!(b_h_of(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn z_from_level_inverts_the_limit_law() {
        assert!(z_from_level(1.0 - (-2.0f64).exp()).unwrap().abs() < 1e-14);
        assert!((z_from_level(0.05).unwrap() - 3.663).abs() < 1e-3);
        for a in [0.01, 0.1, 0.5] {
            assert!((limit_cdf(z_from_level(a).unwrap()) - (1.0 - a)).abs() < 1e-12);
        }
        assert!(z_from_level(0.0).is_err() && z_from_level(1.0).is_err());
    }

    #[test]
    fn omega_substitutions() {
        assert_eq!(omega_at(&Vector3::new(1.0, 0.0, 0.0), 5.0), Matrix2::new(5.0, 0.0, 0.0, 1.0));
        assert_eq!(omega_at(&Vector3::new(0.0, 1.0, 0.0), 5.0), Matrix2::identity());
    }

    #[test]
    fn straight_stub_has_closed_form_c() {
        let k = constants();
        let line = axis(0.0, 2.0, 10);
        let ing = ingredients_at(&Frozen, Vector2::zeros(), k, &DegeneracyGuard::default()).unwrap();
        let root = sqrt_psd(&omega_at(&ing.a_vec, k.b1));
        let want = ((k.b2 / 2.0).sqrt() / std::f64::consts::PI * 2.0 * (root * Vector2::x()).norm() / ing.norm_a_r).ln();
        let got = constant_c(&line, &Frozen, k, &DegeneracyGuard::default()).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn gaussian_axis_c_has_closed_form() {
        // On the x1 axis A = (0, A2, 0), so Omega = A2^2 I and the integrand is 1/sqrt(R22).
        let m = AnalyticModel::elongated_gaussian(2.0, 1.0).unwrap();
        let k = constants();
        let guard = DegeneracyGuard::default();
        let line = axis(0.5, 3.0, 50);
        let got = constant_c(&line, &m, k, &guard).unwrap();
        let want = ((k.b2 / 2.0).sqrt() / std::f64::consts::PI * 2.5 / k.r_matrix[1][1].sqrt()).ln();
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        let fine = constant_c(&axis(0.5, 3.0, 100), &m, k, &guard).unwrap();
        assert!((got - fine).abs() < 1e-4);
        let rev = constant_c(&line.reversed(), &m, k, &guard).unwrap();
        assert!((got - rev).abs() < 1e-12);
    }

    #[test]
    fn flat_point_is_rejected() {
        let m = AnalyticModel::elongated_gaussian(2.0, 1.0).unwrap();
        let e = ingredients_at(&m, Vector2::zeros(), constants(), &DegeneracyGuard::default());
        assert!(matches!(e, Err(FilamentError::FlatFilament(_))));
    }

    #[test]
    fn g_two_ways_and_w_identity() {
        let m = AnalyticModel::elongated_gaussian(2.0, 1.0).unwrap();
        let k = constants();
        let x = Vector2::new(0.5, 0.0);
        let ing = ingredients_at(&m, x, k, &DegeneracyGuard::default()).unwrap();
        let inv = ing.f.sqrt() * ing.v_norm * ing.norm_a_r / ing.a_tilde_prime.abs();
        assert!((1.0 / ing.g.abs() - inv).abs() < 1e-12 * inv);
        assert!((ing.w_vec * ing.a_tilde_prime - ing.a_vec).norm() < 1e-12 * ing.a_vec.norm());
        let sd = pointwise_sd(&m, x, k, 1000, 0.4, &DegeneracyGuard::default()).unwrap();
        let alt = ing.f.sqrt() * ing.norm_a_r / (ing.a_tilde_prime.abs() * (1000.0 * 0.4f64.powi(6)).sqrt());
        assert!((sd - alt).abs() < 1e-12 * sd);
        let sd2 = pointwise_sd(&m, x, k, 4000, 0.4, &DegeneracyGuard::default()).unwrap();
        assert!((sd / sd2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn radii_follow_the_formula() {
        let m = AnalyticModel::elongated_gaussian(2.0, 1.0).unwrap();
        let k = constants();
        let line = axis(0.5, 3.0, 20);
        let guard = DegeneracyGuard::default();
        let a = band_radii(&line, &m, k, 10_000, 0.3, 1.0, &guard).unwrap();
        let b = band_radii(&line, &m, k, 40_000, 0.3, 1.0, &guard).unwrap();
        for i in 0..a.radii.len() {
            assert!((a.radii[i] / b.radii[i] - 2.0).abs() < 1e-12);
            assert!(a.radii[i] > 0.0);
            let want = a.b_h / ((10_000.0 * 0.3f64.powi(6)).sqrt() * a.g[i].abs());
            assert!((a.radii[i] - want).abs() < 1e-12 * want);
        }
        // Larger |g| means a narrower band.
        let (i, j) = (0, a.g.len() - 1);
        assert_eq!(a.g[i].abs() > a.g[j].abs(), a.radii[i] < a.radii[j]);
    }

    proptest! {
        #[test]
        fn omega_is_psd_and_root_squares_back(a1 in -3.0f64..3.0, a2 in -3.0f64..3.0, a3 in -3.0f64..3.0) {
            let om = omega_at(&Vector3::new(a1, a2, a3), constants().b1);
            let e = SymmetricEigen::new(om).eigenvalues;
            prop_assert!(e.min() >= -1e-12 * om.norm().max(1.0));
            let r = sqrt_psd(&om);
            prop_assert!((r * r - om).norm() <= 1e-10 * om.norm().max(1.0));
        }
    }
}
