//! Monte Carlo harness: replicated KDE experiments against an analytic
//! model, and a direct simulator of the limiting Gaussian field on a
//! rescaled filament.
//!
//! Every replicate draws from its own ChaCha8 stream keyed by
//! `(seed, n, rep)`, so results do not depend on scheduling. Replicates run
//! in parallel and are merged back in replicate order.

mod experiments;
mod gauss_field;
pub mod stats;

pub use experiments::{
    run_geometry, run_pointwise, run_rate, run_recovery, run_sup_deviation, theoretical_variance, GeometryLevel,
    GeometryRep, PointwiseLevel, PointwiseRep, RateLevel, RateReport, RecoveryLevel, SupLevel, SupRep,
};
pub use gauss_field::{
    covariance_at, covariance_expansion_check, simulate_gauss_field, CovarianceReport, GaussFieldConfig,
    GaussFieldLevel, ProbeVariance,
};

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::{default_bandwidth, AnalyticModel};
use crate::error::{FilamentError, Result};
use crate::flow::FlowSpec;

/// Start points for the flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StartSpec {
    /// `count` evenly spaced points from `from` to `to`, both included.
    Segment { from: [f64; 2], to: [f64; 2], count: usize },
    /// `count` points on a circle, the first at angle 0.
    Circle { center: [f64; 2], radius: f64, count: usize },
    Points { points: Vec<[f64; 2]> },
}

impl StartSpec {
    pub fn points(&self) -> Result<Vec<Vector2<f64>>> {
        let pts: Vec<Vector2<f64>> = match self {
            Self::Segment { from, to, count } => {
                let (a, b) = (Vector2::from(*from), Vector2::from(*to));
                match *count {
                    0 => Vec::new(),
                    1 => vec![a],
                    c => (0..c).map(|i| a + (b - a) * (i as f64 / (c - 1) as f64)).collect(),
                }
            }
            Self::Circle { center, radius, count } => {
                let c = Vector2::from(*center);
                (0..*count)
                    .map(|i| {
                        let t = 2.0 * std::f64::consts::PI * i as f64 / *count as f64;
                        c + *radius * Vector2::new(t.cos(), t.sin())
                    })
                    .collect()
            }
            Self::Points { points } => points.iter().map(|p| Vector2::from(*p)).collect(),
        };
        if pts.is_empty() {
            return Err(FilamentError::InvalidParameter("start grid is empty".into()));
        }
        if pts.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(FilamentError::InvalidParameter("start grid has a non-finite point".into()));
        }
        Ok(pts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: AnalyticModel,
    pub n_grid: Vec<usize>,
    /// Bandwidth rule `h = (beta / n)^(1/9)`.
    pub beta: f64,
    pub reps: usize,
    pub z_grid: Vec<f64>,
    pub seed: u64,
    pub starts: StartSpec,
    pub flow: FlowSpec,
    pub guard_delta: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(FilamentError::InvalidParameter("reps must be at least 1".into()));
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 {
            return Err(FilamentError::InvalidParameter("n_grid needs positive entries".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FilamentError::InvalidParameter("n_grid must be strictly increasing".into()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(FilamentError::InvalidParameter(format!("beta must be positive, got {}", self.beta)));
        }
        if self.z_grid.windows(2).any(|w| !(w[0] < w[1])) || self.z_grid.iter().any(|z| !z.is_finite()) {
            return Err(FilamentError::InvalidParameter("z_grid must be finite and increasing".into()));
        }
        if !(self.guard_delta >= 0.0) {
            return Err(FilamentError::InvalidParameter("guard_delta must be nonnegative".into()));
        }
        self.flow.validate()?;
        self.starts.points().map(|_| ())
    }

    pub fn bandwidth(&self, n: usize) -> Result<f64> {
        default_bandwidth(n, self.beta)
    }
}

/// Generator for replicate `rep` at sample size `n`.
pub fn replicate_rng(seed: u64, n: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 32) ^ rep as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepFailure {
    pub rep: usize,
    pub reason: String,
}

/// One point of an empirical CDF next to the limit law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub z: f64,
    pub empirical: f64,
    pub limit: f64,
}

/// Successful replicates with their indices, and the failures.
pub(crate) type Partitioned<T> = (Vec<(usize, T)>, Vec<RepFailure>);

/// Split per-replicate results, erroring when 10% or more failed.
pub(crate) fn partition<T>(results: Vec<Result<T>>) -> Result<Partitioned<T>> {
    let total = results.len();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push((rep, v)),
            Err(e) => failed.push(RepFailure { rep, reason: e.to_string() }),
        }
    }
    if failed.len() * 10 >= total && !failed.is_empty() {
        return Err(FilamentError::TooManyFailures { failed: failed.len(), total });
    }
    Ok((ok, failed))
}
