//! The limiting Gaussian field on the rescaled filament
//! `L_h = {x : h x in L}`:
//!
//! ```text
//! U_h(x) = a_h(x) int A_h(x)^T d2K(x - s) dW(s),   A_h(x) = A(h x),  a_h = 1 / |A_h|_R
//! ```
//!
//! White noise is discretised on a square grid, one standard normal per
//! cell scaled by the cell side. The covariance
//! `r_h(x + y, x) = a_h a_h A_h(x + y)^T M(y) A_h(x)` with
//! `M(y) = int d2K(u + y) d2K(u)^T du` is also available in exact form via a
//! quadrature rule on the overlap of the two kernel supports.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{empirical_cdf, ks_distance, mean, variance};
use super::{replicate_rng, CdfPoint};
use crate::bands::{b_h_of, constant_c, ingredients_at, limit_cdf, omega_at};
use crate::density::DensityField;
use crate::eigenfield::DegeneracyGuard;
use crate::error::{FilamentError, Result};
use crate::kernel::{Kernel, KernelConstants};
use crate::quadrature::PlaneRule;
use crate::ridge::Polyline;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussFieldConfig {
    pub h_grid: Vec<f64>,
    /// Cell side of the white-noise grid, rescaled units.
    pub noise_spacing: f64,
    /// Spacing of the points where the sup is taken, rescaled units.
    pub sample_spacing: f64,
    pub reps: usize,
    pub seed: u64,
    /// The filament in original units.
    pub filament: Polyline,
    pub z_grid: Vec<f64>,
    pub cell_budget: usize,
    /// Number of points where the variance is reported.
    pub probes: usize,
    pub guard_delta: f64,
}

impl GaussFieldConfig {
    pub fn new(filament: Polyline, h_grid: Vec<f64>, reps: usize, seed: u64) -> Self {
        Self {
            h_grid,
            noise_spacing: 1.0 / 16.0,
            sample_spacing: 1.0 / 32.0,
            reps,
            seed,
            filament,
            z_grid: vec![-1.0, 0.0, 1.0, 2.0, 3.0],
            cell_budget: 10_000_000,
            probes: 20,
            guard_delta: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FilamentError::InvalidParameter(m));
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if !(self.noise_spacing > 0.0 && self.noise_spacing <= 0.125) {
            return bad(format!("noise_spacing must lie in (0, 1/8], got {}", self.noise_spacing));
        }
        if !(self.sample_spacing > 0.0 && self.sample_spacing.is_finite()) {
            return bad(format!("sample_spacing must be positive, got {}", self.sample_spacing));
        }
        if self.h_grid.is_empty() || self.h_grid.iter().any(|h| !(*h > 0.0 && *h < 1.0)) {
            return bad("h_grid entries must lie in (0, 1)".into());
        }
        if self.filament.len() < 2 {
            return Err(FilamentError::ShortPolyline(2));
        }
        if self.probes == 0 {
            return bad("probes must be at least 1".into());
        }
        Ok(())
    }
}

/// Points along `line` at arc spacing `step`, plus the last vertex of an
/// open line.
fn resample(line: &Polyline, step: f64) -> Vec<Vector2<f64>> {
    let mut out = Vec::new();
    let mut carry = 0.0;
    for (a, b) in line.segments() {
        let len = (b - a).norm();
        let mut s = carry;
        while s < len {
            out.push(a + (b - a) * (s / len));
            s += step;
        }
        carry = s - len;
    }
    if !line.closed {
        out.push(*line.points().last().expect("nonempty line"));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeVariance {
    /// Position on `L_h`, rescaled units.
    pub x: [f64; 2],
    /// Exact variance of the discretised field.
    pub discrete: f64,
    /// Sample variance over replicates.
    pub empirical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarCovariance {
    pub distance: f64,
    pub covariance: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussFieldLevel {
    pub h: f64,
    pub cells: usize,
    pub samples: usize,
    pub c: f64,
    /// `sup |U_h|` over `L_h`, one per replicate.
    pub sups: Vec<f64>,
    /// Kolmogorov–Smirnov distance of `b_h^{-1}(sup)` to `exp(-2 e^{-z})`.
    pub ks: f64,
    pub cdf: Vec<CdfPoint>,
    pub p_below_b_h0: f64,
    pub probes: Vec<ProbeVariance>,
    /// Largest `|discrete - 1|` over probes.
    pub max_variance_error: f64,
    /// Mean of the probes' sample variances.
    pub pooled_variance: f64,
    pub far_covariance: Option<FarCovariance>,
}

/// Sparse weights of one field point over the noise cells.
struct Row {
    cells: Vec<u32>,
    weights: Vec<f64>,
}

struct Grid {
    origin: Vector2<f64>,
    nx: usize,
    ny: usize,
    step: f64,
}

impl Grid {
    fn covering(points: &[Vector2<f64>], step: f64, budget: usize) -> Result<Self> {
        let mut lo = Vector2::repeat(f64::INFINITY);
        let mut hi = Vector2::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        lo -= Vector2::repeat(1.0);
        hi += Vector2::repeat(1.0);
        let nx = ((hi[0] - lo[0]) / step).ceil() as usize;
        let ny = ((hi[1] - lo[1]) / step).ceil() as usize;
        let cells = nx.saturating_mul(ny);
        if cells > budget {
            return Err(FilamentError::CellBudget { cells, budget });
        }
        Ok(Self { origin: lo, nx, ny, step })
    }

    fn len(&self) -> usize {
        self.nx * self.ny
    }

    fn row(&self, x: Vector2<f64>, coef: &Vector3<f64>) -> Row {
        let k = Kernel;
        let rel = (x - self.origin) / self.step;
        let span = (1.0 / self.step).ceil() as isize + 1;
        let (cx, cy) = (rel[0].floor() as isize, rel[1].floor() as isize);
        let mut row = Row { cells: Vec::new(), weights: Vec::new() };
        for j in (cy - span).max(0)..=(cy + span).min(self.ny as isize - 1) {
            for i in (cx - span).max(0)..=(cx + span).min(self.nx as isize - 1) {
                let s = self.origin + Vector2::new(i as f64 + 0.5, j as f64 + 0.5) * self.step;
                let z = x - s;
                if z.norm_squared() >= 1.0 {
                    continue;
                }
                let d2 = Vector3::from(k.d2([z[0], z[1]]));
                row.cells.push((j as usize * self.nx + i as usize) as u32);
                row.weights.push(coef.dot(&d2) * self.step);
            }
        }
        row
    }
}

/// One replicate: the sup, the probe values, and a pair with disjoint noise.
struct Draw {
    sup: f64,
    probes: Vec<f64>,
    pair: Option<(f64, f64)>,
}

fn apply(row: &Row, noise: &[f64]) -> f64 {
    row.cells.iter().zip(&row.weights).map(|(c, w)| w * noise[*c as usize]).sum()
}

/// Simulate `sup |U_h|` over `L_h` for each bandwidth.
pub fn simulate_gauss_field<F: DensityField + ?Sized>(
    config: &GaussFieldConfig,
    field: &F,
    constants: &KernelConstants,
) -> Result<Vec<GaussFieldLevel>> {
    config.validate()?;
    let guard = DegeneracyGuard::new(config.guard_delta)?;
    let c = constant_c(&config.filament, field, constants, &guard)?;

    config
        .h_grid
        .iter()
        .enumerate()
        .map(|(level, &h)| {
            let originals = resample(&config.filament, h * config.sample_spacing);
            let xs: Vec<Vector2<f64>> = originals.iter().map(|p| p / h).collect();
            let grid = Grid::covering(&xs, config.noise_spacing, config.cell_budget)?;
            let rows: Vec<Row> = originals
                .par_iter()
                .zip(&xs)
                .map(|(p, x)| {
                    let ing = ingredients_at(field, *p, constants, &guard)?;
                    Ok(grid.row(*x, &(ing.a_vec / ing.norm_a_r)))
                })
                .collect::<Result<_>>()?;

            let m = rows.len();
            let np = config.probes.min(m);
            let probe_idx: Vec<usize> = (0..np).map(|i| if np == 1 { 0 } else { i * (m - 1) / (np - 1) }).collect();
            // A pair of samples at distance >= 2 has disjoint noise.
            let far = (1..m).find(|&j| (xs[j] - xs[0]).norm() >= 2.0);

            let draws: Vec<Draw> = (0..config.reps)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = replicate_rng(config.seed, level, rep);
                    let noise: Vec<f64> = (0..grid.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let sup = rows.iter().map(|r| apply(r, &noise).abs()).fold(0.0, f64::max);
                    let probes = probe_idx.iter().map(|&j| apply(&rows[j], &noise)).collect();
                    let pair = far.map(|j| (apply(&rows[0], &noise), apply(&rows[j], &noise)));
                    Draw { sup, probes, pair }
                })
                .collect();

            let sups: Vec<f64> = draws.iter().map(|d| d.sup).collect();
            let probes: Vec<ProbeVariance> = probe_idx
                .iter()
                .enumerate()
                .map(|(k, &j)| {
                    let vals: Vec<f64> = draws.iter().map(|d| d.probes[k]).collect();
                    ProbeVariance {
                        x: [xs[j][0], xs[j][1]],
                        discrete: rows[j].weights.iter().map(|w| w * w).sum(),
                        empirical: variance(&vals),
                    }
                })
                .collect();
            let far_covariance = far.map(|j| {
                let prods: Vec<f64> = draws.iter().map(|d| d.pair.map_or(0.0, |(a, b)| a * b)).collect();
                FarCovariance {
                    distance: (xs[j] - xs[0]).norm(),
                    covariance: mean(&prods),
                    standard_error: (variance(&prods) / prods.len() as f64).sqrt(),
                }
            });

            let r = (2.0 * (1.0 / h).ln()).sqrt();
            let z_of_sup: Vec<f64> = sups.iter().map(|s| r * (s - r) - c).collect();
            let cdf = config
                .z_grid
                .iter()
                .map(|&z| Ok(CdfPoint { z, empirical: empirical_cdf(&sups, b_h_of(z, h, c)?), limit: limit_cdf(z) }))
                .collect::<Result<_>>()?;
            Ok(GaussFieldLevel {
                h,
                cells: grid.len(),
                samples: m,
                c,
                ks: ks_distance(&z_of_sup, limit_cdf),
                p_below_b_h0: empirical_cdf(&sups, b_h_of(0.0, h, c)?),
                max_variance_error: probes.iter().map(|p| (p.discrete - 1.0).abs()).fold(0.0, f64::max),
                pooled_variance: mean(&probes.iter().map(|p| p.empirical).collect::<Vec<_>>()),
                probes,
                far_covariance,
                cdf,
                sups,
            })
        })
        .collect()
}

/// `M(y) = int d2K(u + y) d2K(u)^T du` on the overlap of the two supports.
fn overlap_matrix(y: Vector2<f64>) -> Matrix3<f64> {
    let d = y.norm();
    let rule = PlaneRule::lens(d, 64, 12).rotated(y[1].atan2(y[0]));
    let k = Kernel;
    let mut m = Matrix3::zeros();
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let a = Vector3::from(k.d2([p[0] + y[0], p[1] + y[1]]));
        let b = Vector3::from(k.d2(*p));
        m += *w * a * b.transpose();
    }
    m
}

/// Exact `r_h(x + y, x)` with `x = p / h`, `p` in original units.
pub fn covariance_at<F: DensityField + ?Sized>(
    field: &F,
    constants: &KernelConstants,
    p: Vector2<f64>,
    h: f64,
    y: Vector2<f64>,
    guard: &DegeneracyGuard,
) -> Result<f64> {
    let at = ingredients_at(field, p, constants, guard)?;
    let moved = ingredients_at(field, p + h * y, constants, guard)?;
    let m = overlap_matrix(y);
    Ok(moved.a_vec.dot(&(m * at.a_vec)) / (moved.norm_a_r * at.norm_a_r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub h: f64,
    pub point: [f64; 2],
    /// `Lambda` fitted to `1 - r_h(x + y, x) = y^T Lambda y`.
    pub fitted: [[f64; 2]; 2],
    /// `Lambda2 = b2 Omega / |A|_R^2`.
    pub predicted: [[f64; 2]; 2],
    /// `|fitted - predicted|_F / |predicted|_F`.
    pub relative_residual: f64,
    pub r_at_zero: f64,
    /// Largest `|r(x + y, x) - r(x, x + y)|` over the fit grid.
    pub symmetry_error: f64,
    /// Largest `|r|` at displacements of length 2 and beyond.
    pub beyond_support: f64,
    /// `r` at a displacement of length 1.5, inside the overlap.
    pub inside_overlap: f64,
}

/// Fit the local quadratic form of `r_h` over `|y| <= y_max` at `x = p / h`
/// and compare it with `Lambda2`.
pub fn covariance_expansion_check<F: DensityField + ?Sized>(
    field: &F,
    constants: &KernelConstants,
    p: Vector2<f64>,
    h: f64,
    y_max: f64,
    guard: &DegeneracyGuard,
) -> Result<CovarianceReport> {
    if !(y_max > 0.0 && y_max <= 0.1) {
        return Err(FilamentError::InvalidParameter(format!("y_max must lie in (0, 0.1], got {y_max}")));
    }
    let r = |y: Vector2<f64>| covariance_at(field, constants, p, h, y, guard);
    // r(x, x + y): the same quantity read from the other point.
    let r_swapped = |y: Vector2<f64>| covariance_at(field, constants, p + h * y, h, -y, guard);

    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    let mut symmetry_error: f64 = 0.0;
    for k in 1..=4 {
        let rad = y_max * k as f64 / 4.0;
        for j in 0..16 {
            let t = std::f64::consts::PI * j as f64 / 8.0;
            let y = rad * Vector2::new(t.cos(), t.sin());
            let v = r(y)?;
            symmetry_error = symmetry_error.max((v - r_swapped(y)?).abs());
            let row = Vector3::new(y[0] * y[0], 2.0 * y[0] * y[1], y[1] * y[1]);
            ata += row * row.transpose();
            atb += row * (1.0 - v);
        }
    }
    let l = ata
        .cholesky()
        .ok_or_else(|| FilamentError::InvalidParameter("singular covariance fit".into()))?
        .solve(&atb);
    let fitted = Matrix2::new(l[0], l[1], l[1], l[2]);

    let ing = ingredients_at(field, p, constants, guard)?;
    let predicted = omega_at(&ing.a_vec, constants.b1) * (constants.b2 / ing.norm_a_r.powi(2));
    let beyond_support = [2.0, 2.5, 3.0]
        .iter()
        .flat_map(|&d| [0.0, 1.0, 2.0].map(move |t: f64| d * Vector2::new(t.cos(), t.sin())))
        .map(|y| r(y).map(f64::abs))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let as_array = |m: Matrix2<f64>| [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]];
    Ok(CovarianceReport {
        h,
        point: [p[0], p[1]],
        relative_residual: (fitted - predicted).norm() / predicted.norm(),
        fitted: as_array(fitted),
        predicted: as_array(predicted),
        r_at_zero: r(Vector2::zeros())?,
        symmetry_error,
        beyond_support,
        inside_overlap: r(Vector2::new(1.5, 0.0))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::AnalyticModel;
    use crate::kernel::constants;

    fn axis(x0: f64, x1: f64) -> Polyline {
        Polyline::open((0..=50).map(|i| Vector2::new(x0 + (x1 - x0) * i as f64 / 50.0, 0.0)).collect())
    }

    #[test]
    fn overlap_at_zero_is_r() {
        let m = overlap_matrix(Vector2::zeros());
        let r = constants().r();
        assert!((m - r).norm() < 1e-9 * r.norm(), "{m} vs {r}");
    }

    #[test]
    fn overlap_transpose_symmetry() {
        let y = Vector2::new(0.3, -0.7);
        assert!((overlap_matrix(y) - overlap_matrix(-y).transpose()).norm() < 1e-10);
    }

    #[test]
    fn covariance_support() {
        let m = AnalyticModel::elongated_gaussian(2.0, 1.0).unwrap();
        let g = DegeneracyGuard::default();
        let p = Vector2::new(2.0, 0.0);
        let k = constants();
        assert!((covariance_at(&m, k, p, 0.1, Vector2::zeros(), &g).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(covariance_at(&m, k, p, 0.1, Vector2::new(2.0, 0.0), &g).unwrap(), 0.0);
        assert!(covariance_at(&m, k, p, 0.1, Vector2::new(1.5, 0.0), &g).unwrap().abs() > 1e-6);
    }

    #[test]
    fn resample_spacing() {
        let pts = resample(&axis(0.0, 1.0), 0.1);
        assert_eq!(pts.len(), 11);
        assert!(pts.windows(2).all(|w| ((w[1] - w[0]).norm() - 0.1).abs() < 1e-12));
    }

    #[test]
    fn config_guards() {
        let mut c = GaussFieldConfig::new(axis(0.5, 3.0), vec![0.5], 2, 1);
        assert!(c.validate().is_ok());
        c.noise_spacing = 0.2;
        assert!(c.validate().is_err());
        let mut c = GaussFieldConfig::new(axis(0.5, 3.0), vec![0.5], 2, 1);
        c.cell_budget = 100;
        let m = AnalyticModel::elongated_gaussian(2.0, 1.0).unwrap();
        assert!(matches!(simulate_gauss_field(&c, &m, constants()), Err(FilamentError::CellBudget { .. })));
    }

    #[test]
    fn discrete_variance_near_one() {
        let m = AnalyticModel::elongated_gaussian(2.0, 1.0).unwrap();
        let c = GaussFieldConfig::new(axis(0.5, 3.0), vec![0.5], 20, 3);
        let lv = simulate_gauss_field(&c, &m, constants()).unwrap();
        assert!(lv[0].max_variance_error < 0.03, "{:?}", lv[0].probes);
        assert!(lv[0].sups.iter().all(|s| *s > 0.0));
    }
}
