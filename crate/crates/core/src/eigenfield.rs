//! The second-eigenvector field `V = G(d2 f)` and eigenvalue `lambda2 = J(d2 f)`
//! of the Hessian, and their derivatives.
//!
//! With `s = sqrt((w - u)^2 + 4 v^2)`:
//!
//! ```text
//! G(u, v, w) = (2u - 2w + 2v - 2s,  w - u + 4v - s)
//! J(u, v, w) = (u + w - s) / 2
//! ```
//!
//! `G` is an eigenvector of `[[u, v], [v, w]]` for `J` off the diagonal
//! degeneracy `u = w, v = 0`. It is not bounded away from zero there: writing
//! the unit eigenvector as `(cos a, sin a)` and the eigen-gap as `s`,
//! `G = -s (2 sin a + 4 cos a) (cos a, sin a)`, which vanishes when
//! `tan a = -2`. Callers that divide by `|V|` must check it.

use nalgebra::{Matrix2, Matrix2x3, Vector2, Vector3};

use crate::density::{DensityField, Jet};
use crate::error::{FilamentError, Result};

/// Accepts `(u, v, w)` when `|u - w| > delta` or `|v| > delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegeneracyGuard {
    pub delta: f64,
}

impl Default for DegeneracyGuard {
    fn default() -> Self {
        Self { delta: 1e-8 }
    }
}

impl DegeneracyGuard {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(FilamentError::InvalidParameter(format!("delta must be positive, got {delta}")));
        }
        Ok(Self { delta })
    }

    pub fn accepts(&self, d2: &Vector3<f64>) -> bool {
        (d2[0] - d2[2]).abs() > self.delta || d2[1].abs() > self.delta
    }

    pub fn check(&self, d2: &Vector3<f64>, at: Option<Vector2<f64>>) -> Result<()> {
        if self.accepts(d2) {
            Ok(())
        } else {
            Err(FilamentError::Degenerate { at: at.map(|p| [p[0], p[1]]), d2: [d2[0], d2[1], d2[2]] })
        }
    }
}

fn gap(u: f64, v: f64, w: f64) -> f64 {
    ((w - u) * (w - u) + 4.0 * v * v).sqrt()
}

pub fn g_map(u: f64, v: f64, w: f64) -> Vector2<f64> {
    let s = gap(u, v, w);
    Vector2::new(2.0 * u - 2.0 * w + 2.0 * v - 2.0 * s, w - u + 4.0 * v - s)
}

/// Smaller eigenvalue of `[[u, v], [v, w]]`.
pub fn j_map(u: f64, v: f64, w: f64) -> f64 {
    0.5 * (u + w - gap(u, v, w))
}

/// Larger eigenvalue of `[[u, v], [v, w]]`.
pub fn lambda1(u: f64, v: f64, w: f64) -> f64 {
    0.5 * (u + w + gap(u, v, w))
}

/// Jacobian of [`g_map`] with respect to `(u, v, w)`.
pub fn grad_g(u: f64, v: f64, w: f64, guard: &DegeneracyGuard) -> Result<Matrix2x3<f64>> {
    guard.check(&Vector3::new(u, v, w), None)?;
    Ok(grad_g_unchecked(u, v, w))
}

fn grad_g_unchecked(u: f64, v: f64, w: f64) -> Matrix2x3<f64> {
    let s = gap(u, v, w);
    let (su, sv, sw) = ((u - w) / s, 4.0 * v / s, (w - u) / s);
    Matrix2x3::new(
        2.0 - 2.0 * su,
        2.0 - 2.0 * sv,
        -2.0 - 2.0 * sw,
        -1.0 - su,
        4.0 - sv,
        1.0 - sw,
    )
}

/// Eigen-structure of the Hessian at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenFrame {
    pub lambda1: f64,
    pub lambda2: f64,
    /// `G(d2 f)`, unnormalised.
    pub v: Vector2<f64>,
    /// `v` rotated by +90 degrees.
    pub v_perp: Vector2<f64>,
    /// `|Hess f * v - lambda2 * v|`.
    pub eigen_residual: f64,
}

impl EigenFrame {
    pub fn from_jet(jet: &Jet, guard: &DegeneracyGuard, at: Option<Vector2<f64>>) -> Result<Self> {
        guard.check(&jet.d2, at)?;
        let (u, v, w) = (jet.d2[0], jet.d2[1], jet.d2[2]);
        let g = g_map(u, v, w);
        let l2 = j_map(u, v, w);
        let eigen_residual = (jet.hessian() * g - l2 * g).norm();
        Ok(Self {
            lambda1: lambda1(u, v, w),
            lambda2: l2,
            v: g,
            v_perp: Vector2::new(-g[1], g[0]),
            eigen_residual,
        })
    }
}

pub fn frame_at<F: DensityField + ?Sized>(field: &F, x: Vector2<f64>, guard: &DegeneracyGuard) -> Result<EigenFrame> {
    EigenFrame::from_jet(&field.eval_all(x), guard, Some(x))
}

/// `grad G(d2 f)` from a jet, checked against the guard.
pub fn g_tilde(jet: &Jet, guard: &DegeneracyGuard, at: Option<Vector2<f64>>) -> Result<Matrix2x3<f64>> {
    guard.check(&jet.d2, at)?;
    Ok(grad_g_unchecked(jet.d2[0], jet.d2[1], jet.d2[2]))
}

/// `grad V = grad G(d2 f) * grad d2 f`, as a 2x2 matrix with `(i, j) = dV_i/dx_j`.
pub fn grad_v_from_jet(jet: &Jet, guard: &DegeneracyGuard, at: Option<Vector2<f64>>) -> Result<Matrix2<f64>> {
    Ok(g_tilde(jet, guard, at)? * jet.grad_d2)
}

pub fn grad_v<F: DensityField + ?Sized>(field: &F, x: Vector2<f64>, guard: &DegeneracyGuard) -> Result<Matrix2<f64>> {
    grad_v_from_jet(&field.eval_all(x), guard, Some(x))
}
