//! Density fields: anything that can report `f`, `grad f`, `d2 f` and the
//! third partials at a point.
//!
//! `d2` stacks the Hessian as `(f20, f11, f02)`. `grad_d2` is the 3x2 Jacobian
//! of that vector, so its rows are `(f30, f21)`, `(f21, f12)` and `(f12, f03)`.

mod io;
mod kde;
mod models;

pub use io::{read_points_csv, read_points_from};
pub use kde::KdeField;
pub use models::AnalyticModel;

use nalgebra::{Matrix2, Matrix3x2, Vector2, Vector3};

use crate::error::{FilamentError, Result};
use crate::kernel::Kernel;
use crate::quadrature::PlaneRule;

/// Derivatives of a density at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub f: f64,
    pub grad: Vector2<f64>,
    pub d2: Vector3<f64>,
    pub grad_d2: Matrix3x2<f64>,
}

impl Jet {
    pub fn zero() -> Self {
        Self {
            f: 0.0,
            grad: Vector2::zeros(),
            d2: Vector3::zeros(),
            grad_d2: Matrix3x2::zeros(),
        }
    }

    pub fn hessian(&self) -> Matrix2<f64> {
        Matrix2::new(self.d2[0], self.d2[1], self.d2[1], self.d2[2])
    }

    /// Assemble from third partials `(f30, f21, f12, f03)`.
    pub fn from_parts(f: f64, grad: [f64; 2], d2: [f64; 3], d3: [f64; 4]) -> Self {
        Self {
            f,
            grad: Vector2::new(grad[0], grad[1]),
            d2: Vector3::new(d2[0], d2[1], d2[2]),
            grad_d2: Matrix3x2::new(d3[0], d3[1], d3[1], d3[2], d3[2], d3[3]),
        }
    }
}

/// Uniform read access to a density and its derivatives.
pub trait DensityField: Sync {
    fn eval_all(&self, x: Vector2<f64>) -> Jet;

    fn f(&self, x: Vector2<f64>) -> f64 {
        self.eval_all(x).f
    }
}

impl<T: DensityField + ?Sized> DensityField for &T {
    fn eval_all(&self, x: Vector2<f64>) -> Jet {
        (**self).eval_all(x)
    }
}

/// An i.i.d. sample in the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vector2<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector2<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(FilamentError::EmptyCloud);
        }
        if let Some(i) = points.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(FilamentError::NonFinite(i));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vector2<f64>] {
        &self.points
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }
}

/// Bandwidth `(beta / n)^(1/9)`.
pub fn default_bandwidth(n: usize, beta: f64) -> Result<f64> {
    if n < 2 {
        return Err(FilamentError::InvalidParameter(format!("bandwidth rule needs n >= 2, got {n}")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(FilamentError::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    Ok((beta / n as f64).powf(1.0 / 9.0))
}

/// Rule used for the smoothing expectations below; the integrands are smooth
/// but not polynomial, so it is finer than the kernel-constant rule.
fn smoothing_rule() -> &'static PlaneRule {
    static RULE: std::sync::OnceLock<PlaneRule> = std::sync::OnceLock::new();
    RULE.get_or_init(|| PlaneRule::disk(48, 96))
}

/// Mean of the kernel estimate's Hessian at `x`:
/// `h^-2 int d2K(z) f(x - h z) dz`.
pub fn expected_d2<F: DensityField + ?Sized>(field: &F, x: Vector2<f64>, h: f64) -> Vector3<f64> {
    let mut acc = Vector3::zeros();
    let rule = smoothing_rule();
    for (z, w) in rule.points.iter().zip(&rule.weights) {
        let f = field.f(x - h * Vector2::new(z[0], z[1]));
        let d2 = Kernel.d2(*z);
        acc += w * f * Vector3::new(d2[0], d2[1], d2[2]);
    }
    acc / (h * h)
}

/// Mean of the kernel estimate's gradient at `x`: `h^-1 int grad K(z) f(x - h z) dz`.
pub fn expected_grad<F: DensityField + ?Sized>(field: &F, x: Vector2<f64>, h: f64) -> Vector2<f64> {
    let mut acc = Vector2::zeros();
    let rule = smoothing_rule();
    for (z, w) in rule.points.iter().zip(&rule.weights) {
        let f = field.f(x - h * Vector2::new(z[0], z[1]));
        let d1 = Kernel.jet(*z).d1;
        acc += w * f * Vector2::new(d1[0], d1[1]);
    }
    acc / h
}
