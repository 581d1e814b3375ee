//! Gauss–Legendre rules on an interval, the unit disk, and the lens where two
//! unit disks overlap.
//!
//! Every integrand in this crate is a polynomial in `z` multiplied by
//! `(1 - |z|^2)^p` and cut off at the unit circle. A tensor rule on `[-1, 1]^2`
//! sees that cut-off as a kink and converges slowly, so disk integrals use
//! polar coordinates instead, where the same integrands become polynomials in
//! `r` and trigonometric polynomials in the angle.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let n = NonZeroUsize::new(n.max(1)).expect("n >= 1");
    let rule = GaussLegendre::new(n);
    rule.as_node_weight_pairs().iter().copied().unzip()
}

/// A weighted point set in the plane.
#[derive(Debug, Clone)]
pub struct PlaneRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl PlaneRule {
    /// Tensor rule on the square `[-1, 1]^2`.
    pub fn square(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (xi, wi) in x.iter().zip(&w) {
            for (xj, wj) in x.iter().zip(&w) {
                points.push([*xi, *xj]);
                weights.push(wi * wj);
            }
        }
        Self { points, weights }
    }

    /// Polar rule on the unit disk: `n_r` Gauss–Legendre nodes in the radius
    /// and `n_theta` equally spaced angles.
    ///
    /// Exact for polynomials of total degree below `min(2 n_r - 1, n_theta)`.
    pub fn disk(n_r: usize, n_theta: usize) -> Self {
        let (x, w) = gauss_legendre(n_r);
        let dtheta = 2.0 * PI / n_theta as f64;
        let mut points = Vec::with_capacity(n_r * n_theta);
        let mut weights = Vec::with_capacity(n_r * n_theta);
        for (xi, wi) in x.iter().zip(&w) {
            let r = 0.5 * (xi + 1.0);
            let wr = 0.5 * wi * r * dtheta;
            for k in 0..n_theta {
                let t = (k as f64 + 0.5) * dtheta;
                points.push([r * t.cos(), r * t.sin()]);
                weights.push(wr);
            }
        }
        Self { points, weights }
    }

    /// Rule on `{t : |t| < 1, |t + (d, 0)| < 1}`, the overlap of the unit disk
    /// with its copy centred at `(-d, 0)`. Empty when `d >= 2`.
    ///
    /// Each half of the lens is parametrised by the angle on the circle that
    /// bounds it, which removes the square-root endpoint behaviour in the
    /// outer variable.
    pub fn lens(d: f64, n_outer: usize, n_inner: usize) -> Self {
        let d = d.abs();
        if d >= 2.0 {
            return Self { points: Vec::new(), weights: Vec::new() };
        }
        let phi0 = (0.5 * d).acos();
        let (xo, wo) = gauss_legendre(n_outer);
        let (xi, wi) = gauss_legendre(n_inner);
        let mut points = Vec::with_capacity(2 * n_outer * n_inner);
        let mut weights = Vec::with_capacity(2 * n_outer * n_inner);
        for (a, wa) in xo.iter().zip(&wo) {
            let phi = 0.5 * phi0 * (a + 1.0);
            let (s, c) = phi.sin_cos();
            let w_outer = 0.5 * phi0 * wa * s;
            // Left half bounded by the unit circle, right half by the shifted one.
            for centre in [-c, c - d] {
                for (b, wb) in xi.iter().zip(&wi) {
                    points.push([centre, s * b]);
                    weights.push(w_outer * s * wb);
                }
            }
        }
        Self { points, weights }
    }

    /// Rotate every node by `angle` about the origin.
    pub fn rotated(mut self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        for p in &mut self.points {
            *p = [c * p[0] - s * p[1], s * p[0] + c * p[1]];
        }
        self
    }

    pub fn integrate<F: FnMut([f64; 2]) -> f64>(&self, mut f: F) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(*p)).sum()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
