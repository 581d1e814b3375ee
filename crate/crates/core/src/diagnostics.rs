//! Linearisation terms that connect the estimated filament point to the
//! kernel estimate's second derivatives, plus the bias and deviation
//! decompositions used by the Monte Carlo harness.
//!
//! Population quantities (`grad f`, `G~`, `a'`, `V`) always come from the
//! analytic model; only the estimate's derivatives are random.

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use crate::density::{expected_d2, expected_grad, DensityField};
use crate::eigenfield::{g_tilde, DegeneracyGuard, EigenFrame};
use crate::error::{FilamentError, Result};
use crate::flow::{branch, FlowSettings};
use crate::ridge::{a_tilde_prime, FilamentHit};

/// `phi1(x) = grad f^T G~ (d2 f_hat - E d2 f_hat)(x) / a'(x)`.
pub fn phi1<M, E>(model: &M, estimate: &E, h: f64, x: Vector2<f64>, guard: &DegeneracyGuard) -> Result<f64>
where
    M: DensityField + ?Sized,
    E: DensityField + ?Sized,
{
    let jet = model.eval_all(x);
    if jet.grad == Vector2::zeros() {
        return Ok(0.0);
    }
    let a = g_tilde(&jet, guard, Some(x))?.transpose() * jet.grad;
    let ap = a_tilde_prime(&jet, guard, Some(x))?;
    if ap == 0.0 {
        return Err(FilamentError::ZeroSlope([x[0], x[1]]));
    }
    let centred = estimate.eval_all(x).d2 - expected_d2(model, x, h);
    Ok(a.dot(&centred) / ap)
}

/// `phi2 = ( V^T Hess f (X_hat(theta) - x) + <(E grad f_hat - grad f)(X_hat(theta)), V> ) / a'(x)`
/// with `x` the true hit and `X_hat(theta)` the estimate's curve from the same
/// start run for the true time `theta`.
pub fn phi2<M, E>(
    model: &M,
    estimate: &E,
    h: f64,
    true_hit: &FilamentHit,
    flow: &FlowSettings,
    guard: &DegeneracyGuard,
) -> Result<f64>
where
    M: DensityField + ?Sized,
    E: DensityField + ?Sized,
{
    if !true_hit.found {
        return Err(FilamentError::HitNotFound);
    }
    let x = true_hit.point();
    let x0 = Vector2::new(true_hit.start[0], true_hit.start[1]);
    let x_hat = flow_to(estimate, x0, true_hit.theta, flow, guard)?;
    let jet = model.eval_all(x);
    let frame = EigenFrame::from_jet(&jet, guard, Some(x))?;
    let ap = a_tilde_prime(&jet, guard, Some(x))?;
    if ap == 0.0 {
        return Err(FilamentError::ZeroSlope([x[0], x[1]]));
    }
    let curvature = frame.v.dot(&(jet.hessian() * (x_hat - x)));
    let bias = (expected_grad(model, x_hat, h) - model.eval_all(x_hat).grad).dot(&frame.v);
    Ok((curvature + bias) / ap)
}

/// Position at signed time `t` on the curve through `x0`, landing exactly on
/// `t` with a final partial step.
pub fn flow_to<F: DensityField + ?Sized>(
    field: &F,
    x0: Vector2<f64>,
    t: f64,
    flow: &FlowSettings,
    guard: &DegeneracyGuard,
) -> Result<Vector2<f64>> {
    if t == 0.0 {
        return Ok(x0);
    }
    let settings = FlowSettings { t_max: t.abs().max(flow.step), step: flow.step.min(t.abs()), ..*flow };
    let mut it = branch(field, x0, &settings, guard, t.signum())?;
    let mut last = x0;
    for s in &mut it {
        last = s.x;
    }
    match it.end() {
        Some(e) if e.reason != crate::flow::TerminalReason::Horizon => {
            let p = e.attempted.unwrap_or(last);
            Err(FilamentError::Degenerate { at: Some([p[0], p[1]]), d2: [f64::NAN; 3] })
        }
        _ => Ok(last),
    }
}

/// `a'(x)^-1 V V^T Hess f(x) - I`.
pub fn gamma_matrix<F: DensityField + ?Sized>(field: &F, x: Vector2<f64>, guard: &DegeneracyGuard) -> Result<Matrix2<f64>> {
    let jet = field.eval_all(x);
    let frame = EigenFrame::from_jet(&jet, guard, Some(x))?;
    let ap = a_tilde_prime(&jet, guard, Some(x))?;
    if ap == 0.0 {
        return Err(FilamentError::ZeroSlope([x[0], x[1]]));
    }
    Ok(frame.v * frame.v.transpose() * jet.hessian() / ap - Matrix2::identity())
}

/// `mu2 / 2 * (f30 + f12, f03 + f21)`.
pub fn bias_vector<F: DensityField + ?Sized>(field: &F, x: Vector2<f64>, mu2: f64) -> Vector2<f64> {
    let t = field.eval_all(x).grad_d2;
    // Rows of grad_d2: (f30, f21), (f21, f12), (f12, f03).
    0.5 * mu2 * Vector2::new(t[(0, 0)] + t[(2, 0)], t[(2, 1)] + t[(0, 1)])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationReport {
    pub full_dev: [f64; 2],
    pub normal_comp: f64,
    pub tangential_comp: f64,
    pub theta_diff: f64,
    pub linearization_residual: f64,
}

/// Split `X_hat(theta_hat) - X(theta)` along unit `V` and `V_perp` at the
/// true hit.
pub fn decompose<M: DensityField + ?Sized>(
    model: &M,
    true_hit: &FilamentHit,
    est_hit: &FilamentHit,
    guard: &DegeneracyGuard,
) -> Result<DeviationReport> {
    if !(true_hit.found && est_hit.found) {
        return Err(FilamentError::HitNotFound);
    }
    let x = true_hit.point();
    let frame = EigenFrame::from_jet(&model.eval_all(x), guard, Some(x))?;
    let dev = est_hit.point() - x;
    let n = frame.v.norm();
    if n == 0.0 {
        return Err(FilamentError::ZeroSlope([x[0], x[1]]));
    }
    let theta_diff = est_hit.theta - true_hit.theta;
    Ok(DeviationReport {
        full_dev: [dev[0], dev[1]],
        normal_comp: dev.dot(&frame.v) / n,
        tangential_comp: dev.dot(&frame.v_perp) / n,
        theta_diff,
        linearization_residual: (dev - frame.v * theta_diff).norm(),
    })
}
