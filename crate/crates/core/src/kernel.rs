//! The compactly supported kernel `K(z) = (6/pi)(1 - |z|^2)^5` on the unit
//! disk, its partial derivatives through order three, and the constants that
//! enter the variance and extreme-value formulas.
//!
//! Partials are closed-form polynomials times powers of `q = 1 - |z|^2`.
//! Writing `c = 6/pi`:
//!
//! ```text
//! K1   = -10c z1 q^4
//! K11  =  10c q^3 (9 z1^2 + z2^2 - 1)      K12 = 80c z1 z2 q^3
//! K111 = 240c q^2 z1 (1 - 3 z1^2 - z2^2)   K112 = 80c q^2 z2 (1 - 7 z1^2 - z2^2)
//! ```
//!
//! and the rest by swapping `z1` and `z2`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{FilamentError, Result};
use crate::quadrature::PlaneRule;

const C: f64 = 6.0 / PI;

/// All partials of `K` at one point, grouped by order.
///
/// `d2` is `(K20, K11, K02)` and `d3` is `(K30, K21, K12, K03)`, where
/// `Kij` differentiates `i` times in `z1` and `j` times in `z2`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KernelJet {
    pub k: f64,
    pub d1: [f64; 2],
    pub d2: [f64; 3],
    pub d3: [f64; 4],
}

/// The kernel itself. Stateless; the struct exists so call sites read as
/// `kernel.eval(z)` and so a different kernel could slot in later.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kernel;

impl Kernel {
    pub const SUPPORT_RADIUS: f64 = 1.0;
    pub const MAX_ORDER: usize = 3;

    pub fn eval(&self, z: [f64; 2]) -> f64 {
        let q = 1.0 - z[0] * z[0] - z[1] * z[1];
        if q <= 0.0 {
            0.0
        } else {
            C * q.powi(5)
        }
    }

    /// `K^(i,j)(z)` for `i + j <= 3`.
    pub fn partial(&self, z: [f64; 2], order: (usize, usize)) -> Result<f64> {
        let jet = self.jet(z);
        Ok(match order {
            (0, 0) => jet.k,
            (1, 0) => jet.d1[0],
            (0, 1) => jet.d1[1],
            (2, 0) => jet.d2[0],
            (1, 1) => jet.d2[1],
            (0, 2) => jet.d2[2],
            (3, 0) => jet.d3[0],
            (2, 1) => jet.d3[1],
            (1, 2) => jet.d3[2],
            (0, 3) => jet.d3[3],
            (i, j) => return Err(FilamentError::UnsupportedOrder(i, j)),
        })
    }

    /// Every partial through order three in one pass.
    #[inline]
    pub fn jet(&self, z: [f64; 2]) -> KernelJet {
        let (x, y) = (z[0], z[1]);
        let (x2, y2) = (x * x, y * y);
        let q = 1.0 - x2 - y2;
        if q <= 0.0 {
            return KernelJet::default();
        }
        let q2 = q * q;
        let q3 = q2 * q;
        let q4 = q2 * q2;
        KernelJet {
            k: C * q4 * q,
            d1: [-10.0 * C * x * q4, -10.0 * C * y * q4],
            d2: [
                10.0 * C * q3 * (9.0 * x2 + y2 - 1.0),
                80.0 * C * x * y * q3,
                10.0 * C * q3 * (x2 + 9.0 * y2 - 1.0),
            ],
            d3: [
                240.0 * C * q2 * x * (1.0 - 3.0 * x2 - y2),
                80.0 * C * q2 * y * (1.0 - 7.0 * x2 - y2),
                80.0 * C * q2 * x * (1.0 - x2 - 7.0 * y2),
                240.0 * C * q2 * y * (1.0 - x2 - 3.0 * y2),
            ],
        }
    }

    /// `d^2 K(z) = (K20, K11, K02)`.
    #[inline]
    pub fn d2(&self, z: [f64; 2]) -> [f64; 3] {
        let (x, y) = (z[0], z[1]);
        let (x2, y2) = (x * x, y * y);
        let q = 1.0 - x2 - y2;
        if q <= 0.0 {
            return [0.0; 3];
        }
        let s = 10.0 * C * q * q * q;
        [s * (9.0 * x2 + y2 - 1.0), 8.0 * s * x * y, s * (x2 + 9.0 * y2 - 1.0)]
    }
}

/// Integrals of the kernel used downstream.
///
/// `b1 = int K30^2 / int K12^2` and `b2 = int K12^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub mu2: f64,
    pub r_matrix: [[f64; 3]; 3],
    pub b1: f64,
    pub b2: f64,
    pub integral_of_k: f64,
    pub int_k30_sq: f64,
    pub int_k21_sq: f64,
    pub int_k12_sq: f64,
    pub int_k03_sq: f64,
}

impl KernelConstants {
    pub fn r(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.r_matrix[i][j])
    }
}

/// Default radial node count for [`constants`].
pub const DEFAULT_NODES: usize = 64;

/// Evaluate the kernel constants on a polar disk rule with `nodes` radial
/// nodes and `2 * nodes` angles.
pub fn compute_constants(nodes: usize) -> Result<KernelConstants> {
    if nodes < 16 {
        return Err(FilamentError::InvalidParameter(format!(
            "quadrature needs at least 16 nodes, got {nodes}"
        )));
    }
    let rule = PlaneRule::disk(nodes, 2 * nodes);
    let kernel = Kernel;
    let mut acc = [0.0f64; 7];
    let mut r = [[0.0f64; 3]; 3];
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let j = kernel.jet(*p);
        acc[0] += w * j.k;
        acc[1] += w * j.k * p[0] * p[0];
        for (a, v) in j.d3.iter().enumerate() {
            acc[2 + a] += w * v * v;
        }
        for (a, ra) in r.iter_mut().enumerate() {
            for (b, rab) in ra.iter_mut().enumerate() {
                *rab += w * j.d2[a] * j.d2[b];
            }
        }
    }
    for a in 0..3 {
        for b in 0..a {
            let m = 0.5 * (r[a][b] + r[b][a]);
            r[a][b] = m;
            r[b][a] = m;
        }
    }
    Ok(KernelConstants {
        mu2: acc[1],
        r_matrix: r,
        b1: acc[2] / acc[4],
        b2: 0.5 * acc[4],
        integral_of_k: acc[0],
        int_k30_sq: acc[2],
        int_k21_sq: acc[3],
        int_k12_sq: acc[4],
        int_k03_sq: acc[5],
    })
}

/// Process-wide constants at [`DEFAULT_NODES`], computed on first use.
pub fn constants() -> &'static KernelConstants {
    static CACHE: OnceLock<KernelConstants> = OnceLock::new();
    CACHE.get_or_init(|| compute_constants(DEFAULT_NODES).expect("default node count is valid"))
}
