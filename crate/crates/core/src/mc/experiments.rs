use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{correlation, empirical_cdf, fit_slope, mean, median, variance};
use super::{partition, replicate_rng, CdfPoint, ExperimentConfig, RepFailure};
use crate::bands::{b_h_of, constant_c, ingredients_at, limit_cdf};
use crate::density::{AnalyticModel, DensityField, KdeField};
use crate::diagnostics::{decompose, phi1};
use crate::eigenfield::{frame_at, DegeneracyGuard};
use crate::error::{FilamentError, Result};
use crate::flow::{trace, FlowSettings, Trajectory};
use crate::kernel::{constants, KernelConstants};
use crate::ridge::{assemble, estimate_filament_scaled, find_theta, hausdorff, FilamentHit, Polyline};

/// A start with its true-field clock and hit.
struct Anchor {
    start: Vector2<f64>,
    flow: FlowSettings,
    hit: FilamentHit,
}

fn anchors(config: &ExperimentConfig, guard: &DegeneracyGuard) -> Result<Vec<Anchor>> {
    let mut out = Vec::new();
    for start in config.starts.points()? {
        let Ok(flow) = config.flow.settings_at(&config.model, start, guard) else { continue };
        if let Ok(hit) = find_theta(&config.model, start, &flow, guard, flow.t_max) {
            if hit.found {
                out.push(Anchor { start, flow, hit });
            }
        }
    }
    if out.is_empty() {
        return Err(FilamentError::HitNotFound);
    }
    Ok(out)
}

fn kde_for(model: &AnalyticModel, seed: u64, n: usize, rep: usize, h: f64) -> Result<KdeField> {
    let cloud = model.sample_with(n, &mut replicate_rng(seed, n, rep));
    KdeField::new(cloud, h)
}

/// Estimated hit from the anchor's start on the anchor's clock.
fn paired_hit(kde: &KdeField, a: &Anchor, guard: &DegeneracyGuard) -> Option<FilamentHit> {
    find_theta(kde, a.start, &a.flow, guard, a.flow.t_max).ok().filter(|h| h.found)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupRep {
    pub rep: usize,
    /// `max |g(x)| sqrt(n h^6) |X_hat - X|` over paired starts.
    pub sup: f64,
    pub paired: usize,
    pub unpaired: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupLevel {
    pub n: usize,
    pub h: f64,
    pub c: f64,
    pub records: Vec<SupRep>,
    pub failures: Vec<RepFailure>,
    pub cdf: Vec<CdfPoint>,
}

/// Scaled sup deviation between estimated and true hits, paired by start.
pub fn run_sup_deviation(config: &ExperimentConfig) -> Result<Vec<SupLevel>> {
    config.validate()?;
    let guard = DegeneracyGuard::new(config.guard_delta)?;
    let k = constants();
    let anchors = anchors(config, &guard)?;
    let truth = assemble(&anchors.iter().map(|a| a.hit.point()).collect::<Vec<_>>(), 1e-3);
    let c = constant_c(&truth, &config.model, k, &guard)?;
    let g: Vec<f64> = anchors
        .iter()
        .map(|a| ingredients_at(&config.model, a.hit.point(), k, &guard).map(|i| i.g.abs()))
        .collect::<Result<_>>()?;

    config
        .n_grid
        .iter()
        .map(|&n| {
            let h = config.bandwidth(n)?;
            let scale = (n as f64 * h.powi(6)).sqrt();
            let results: Vec<Result<SupRep>> = (0..config.reps)
                .into_par_iter()
                .map(|rep| {
                    let kde = kde_for(&config.model, config.seed, n, rep, h)?;
                    let mut sup: f64 = 0.0;
                    let mut paired = 0;
                    for (a, g) in anchors.iter().zip(&g) {
                        if let Some(est) = paired_hit(&kde, a, &guard) {
                            sup = sup.max(g * scale * (est.point() - a.hit.point()).norm());
                            paired += 1;
                        }
                    }
                    if paired == 0 {
                        return Err(FilamentError::HitNotFound);
                    }
                    Ok(SupRep { rep, sup, paired, unpaired: anchors.len() - paired })
                })
                .collect();
            let (ok, failures) = partition(results)?;
            let records: Vec<SupRep> = ok.into_iter().map(|(_, r)| r).collect();
            let sups: Vec<f64> = records.iter().map(|r| r.sup).collect();
            let cdf = config
                .z_grid
                .iter()
                .map(|&z| Ok(CdfPoint { z, empirical: empirical_cdf(&sups, b_h_of(z, h, c)?), limit: limit_cdf(z) }))
                .collect::<Result<_>>()?;
            Ok(SupLevel { n, h, c, records, failures, cdf })
        })
        .collect()
}

/// `f |W|_R^2 |V|^2` at `x`, assembled from `W` and again from `A / a'`.
pub fn theoretical_variance<F: DensityField + ?Sized>(
    field: &F,
    x: Vector2<f64>,
    constants: &KernelConstants,
    guard: &DegeneracyGuard,
) -> Result<(f64, f64)> {
    let ing = ingredients_at(field, x, constants, guard)?;
    let w = ing.w_vec;
    let via_w = ing.f * w.dot(&(constants.r() * w)) * ing.v_norm.powi(2);
    let via_a = ing.f * (ing.norm_a_r / ing.a_tilde_prime).powi(2) * ing.v_norm.powi(2);
    Ok((via_w, via_a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseRep {
    pub rep: usize,
    /// `sqrt(n h^6) <X_hat - X, V / |V|>`.
    pub projection: f64,
    pub theta_diff: f64,
    pub phi1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseLevel {
    pub n: usize,
    pub h: f64,
    pub hit: [f64; 2],
    pub records: Vec<PointwiseRep>,
    pub failures: Vec<RepFailure>,
    pub mean: f64,
    pub variance: f64,
    pub standard_error: f64,
    pub theoretical_variance: f64,
    pub variance_ratio: f64,
    /// Correlation of `theta_hat - theta` with `-phi1`.
    pub linearization_correlation: f64,
    /// `Var(sqrt(n h^6) phi1) / (f |W|_R^2)`.
    pub phi1_variance_ratio: f64,
}

/// Law of the deviation at the hit of a single start.
pub fn run_pointwise(config: &ExperimentConfig, x_star: Vector2<f64>) -> Result<Vec<PointwiseLevel>> {
    config.validate()?;
    let guard = DegeneracyGuard::new(config.guard_delta)?;
    let model = &config.model;
    let flow = config.flow.settings_at(model, x_star, &guard)?;
    let hit = find_theta(model, x_star, &flow, &guard, flow.t_max)?;
    if !hit.found {
        return Err(FilamentError::HitNotFound);
    }
    let x = hit.point();
    let frame = frame_at(model, x, &guard)?;
    let unit_v = frame.v.normalize();
    let v_norm_sq = frame.v.norm_squared();
    let (theory, _) = theoretical_variance(model, x, constants(), &guard)?;
    let anchor = Anchor { start: x_star, flow, hit };

    config
        .n_grid
        .iter()
        .map(|&n| {
            let h = config.bandwidth(n)?;
            let scale = (n as f64 * h.powi(6)).sqrt();
            let results: Vec<Result<PointwiseRep>> = (0..config.reps)
                .into_par_iter()
                .map(|rep| {
                    let kde = kde_for(model, config.seed, n, rep, h)?;
                    let est = paired_hit(&kde, &anchor, &guard).ok_or(FilamentError::HitNotFound)?;
                    Ok(PointwiseRep {
                        rep,
                        projection: scale * (est.point() - x).dot(&unit_v),
                        theta_diff: est.theta - anchor.hit.theta,
                        phi1: phi1(model, &kde, h, x, &guard)?,
                    })
                })
                .collect();
            let (ok, failures) = partition(results)?;
            let records: Vec<PointwiseRep> = ok.into_iter().map(|(_, r)| r).collect();
            let proj: Vec<f64> = records.iter().map(|r| r.projection).collect();
            let dt: Vec<f64> = records.iter().map(|r| r.theta_diff).collect();
            let neg_phi: Vec<f64> = records.iter().map(|r| -r.phi1).collect();
            let var = variance(&proj);
            let scaled_phi: Vec<f64> = neg_phi.iter().map(|p| scale * p).collect();
            Ok(PointwiseLevel {
                n,
                h,
                hit: [x[0], x[1]],
                mean: mean(&proj),
                variance: var,
                standard_error: (var / proj.len() as f64).sqrt(),
                theoretical_variance: theory,
                variance_ratio: var / theory,
                linearization_correlation: correlation(&dt, &neg_phi),
                phi1_variance_ratio: variance(&scaled_phi) * v_norm_sq / theory,
                records,
                failures,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateLevel {
    pub n: usize,
    pub h: f64,
    /// `sqrt(log n / (n h^5))`.
    pub rate: f64,
    pub errors: Vec<f64>,
    pub median_error: f64,
    pub failures: Vec<RepFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub start: [f64; 2],
    pub levels: Vec<RateLevel>,
    /// Slope of log median error against log rate.
    pub slope: f64,
}

/// Largest distance between two traces at shared sample times.
fn path_gap(a: &Trajectory, b: &Trajectory) -> f64 {
    let fwd = (a.len() - a.origin).min(b.len() - b.origin);
    let bwd = a.origin.min(b.origin);
    let mut gap: f64 = 0.0;
    for k in 0..fwd {
        gap = gap.max((a.points[a.origin + k] - b.points[b.origin + k]).norm());
    }
    for k in 1..=bwd {
        gap = gap.max((a.points[a.origin - k] - b.points[b.origin - k]).norm());
    }
    gap
}

/// Sup-over-time path error for the first configured start.
pub fn run_rate(config: &ExperimentConfig) -> Result<RateReport> {
    config.validate()?;
    if config.n_grid.len() < 3 {
        return Err(FilamentError::InvalidParameter("rate fit needs at least three sample sizes".into()));
    }
    let guard = DegeneracyGuard::new(config.guard_delta)?;
    let model = &config.model;
    let start = config.starts.points()?[0];
    let flow = config.flow.settings_at(model, start, &guard)?;
    let truth = trace(model, start, &flow, &guard)?;

    let levels: Vec<RateLevel> = config
        .n_grid
        .iter()
        .map(|&n| {
            let h = config.bandwidth(n)?;
            let results: Vec<Result<f64>> = (0..config.reps)
                .into_par_iter()
                .map(|rep| {
                    let kde = kde_for(model, config.seed, n, rep, h)?;
                    Ok(path_gap(&truth, &trace(&kde, start, &flow, &guard)?))
                })
                .collect();
            let (ok, failures) = partition(results)?;
            let errors: Vec<f64> = ok.into_iter().map(|(_, e)| e).collect();
            let nf = n as f64;
            Ok(RateLevel {
                n,
                h,
                rate: (nf.ln() / (nf * h.powi(5))).sqrt(),
                median_error: median(&errors),
                errors,
                failures,
            })
        })
        .collect::<Result<_>>()?;
    let x: Vec<f64> = levels.iter().map(|l| l.rate.ln()).collect();
    let y: Vec<f64> = levels.iter().map(|l| l.median_error.ln()).collect();
    Ok(RateReport { start: [start[0], start[1]], slope: fit_slope(&x, &y)?, levels })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryLevel {
    pub n: usize,
    pub h: f64,
    pub hausdorff: Vec<f64>,
    pub median: f64,
    pub failures: Vec<RepFailure>,
}

/// Hausdorff distance from the KDE filament to `truth`, merging at `h / 2`.
pub fn run_recovery(config: &ExperimentConfig, truth: &Polyline) -> Result<Vec<RecoveryLevel>> {
    config.validate()?;
    let guard = DegeneracyGuard::new(config.guard_delta)?;
    let starts = config.starts.points()?;
    config
        .n_grid
        .iter()
        .map(|&n| {
            let h = config.bandwidth(n)?;
            let results: Vec<Result<f64>> = (0..config.reps)
                .into_par_iter()
                .map(|rep| {
                    let kde = kde_for(&config.model, config.seed, n, rep, h)?;
                    let est = estimate_filament_scaled(&kde, &starts, &config.flow, &guard, 0.5 * h)?;
                    hausdorff(&est.polyline, truth)
                })
                .collect();
            let (ok, failures) = partition(results)?;
            let hausdorff: Vec<f64> = ok.into_iter().map(|(_, d)| d).collect();
            Ok(RecoveryLevel { n, h, median: median(&hausdorff), hausdorff, failures })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryRep {
    pub rep: usize,
    pub start: [f64; 2],
    pub normal: f64,
    pub tangential: f64,
    pub deviation: f64,
    /// `|dev - V (theta_hat - theta)|`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryLevel {
    pub n: usize,
    pub h: f64,
    pub records: Vec<GeometryRep>,
    pub failures: Vec<RepFailure>,
    /// Median residual over median deviation.
    pub residual_ratio: f64,
    pub median_tangential_over_normal: f64,
}

/// Normal/tangential split of the paired deviations.
pub fn run_geometry(config: &ExperimentConfig) -> Result<Vec<GeometryLevel>> {
    config.validate()?;
    let guard = DegeneracyGuard::new(config.guard_delta)?;
    let anchors = anchors(config, &guard)?;
    config
        .n_grid
        .iter()
        .map(|&n| {
            let h = config.bandwidth(n)?;
            let results: Vec<Result<Vec<GeometryRep>>> = (0..config.reps)
                .into_par_iter()
                .map(|rep| {
                    let kde = kde_for(&config.model, config.seed, n, rep, h)?;
                    let mut out = Vec::new();
                    for a in &anchors {
                        let Some(est) = paired_hit(&kde, a, &guard) else { continue };
                        let d = decompose(&config.model, &a.hit, &est, &guard)?;
                        let dev = Vector2::from(d.full_dev).norm();
                        if dev == 0.0 {
                            continue;
                        }
                        out.push(GeometryRep {
                            rep,
                            start: [a.start[0], a.start[1]],
                            normal: d.normal_comp,
                            tangential: d.tangential_comp,
                            deviation: dev,
                            residual: d.linearization_residual,
                        });
                    }
                    if out.is_empty() {
                        return Err(FilamentError::HitNotFound);
                    }
                    Ok(out)
                })
                .collect();
            let (ok, failures) = partition(results)?;
            let records: Vec<GeometryRep> = ok.into_iter().flat_map(|(_, r)| r).collect();
            let res: Vec<f64> = records.iter().map(|r| r.residual).collect();
            let dev: Vec<f64> = records.iter().map(|r| r.deviation).collect();
            let tn: Vec<f64> = records.iter().map(|r| (r.tangential / r.normal).abs()).collect();
            Ok(GeometryLevel {
                n,
                h,
                residual_ratio: median(&res) / median(&dev),
                median_tangential_over_normal: median(&tn),
                records,
                failures,
            })
        })
        .collect()
}
