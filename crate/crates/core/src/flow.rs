//! Integral curves of the eigenvector field, `dX/dt = V(X)`, traced with
//! fixed-step classical Runge–Kutta. The backward branch integrates `-V`.
//!
//! A branch stops at the time horizon, on leaving the working rectangle, or
//! when a stage lands outside the non-degenerate region. The offending point
//! is not appended to the samples; it is kept as [`BranchEnd::attempted`].

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::density::{DensityField, Jet};
use crate::eigenfield::{DegeneracyGuard, EigenFrame};
use crate::error::{FilamentError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
    Both,
}

/// Axis-aligned working rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        if !(min[0] < max[0] && min[1] < max[1]) {
            return Err(FilamentError::InvalidParameter(format!("empty bounds {min:?}..{max:?}")));
        }
        Ok(Self { min, max })
    }

    pub fn square(half_width: f64) -> Self {
        Self { min: [-half_width; 2], max: [half_width; 2] }
    }

    pub fn contains(&self, x: &Vector2<f64>) -> bool {
        x[0] >= self.min[0] && x[0] <= self.max[0] && x[1] >= self.min[1] && x[1] <= self.max[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSettings {
    pub step: f64,
    pub t_max: f64,
    pub direction: Direction,
    pub bounds: Bounds,
    /// Trace `V / |V|` instead of `V`. Changes the time scale of every result.
    pub normalize_v: bool,
}

impl FlowSettings {
    pub fn new(step: f64, t_max: f64, bounds: Bounds) -> Result<Self> {
        let s = Self { step, t_max, direction: Direction::Both, bounds, normalize_v: false };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(FilamentError::InvalidParameter(format!("step must be positive, got {}", self.step)));
        }
        if !(self.t_max >= self.step && self.t_max.is_finite()) {
            return Err(FilamentError::InvalidParameter(format!(
                "t_max ({}) must be at least the step ({})",
                self.t_max, self.step
            )));
        }
        Bounds::new(self.bounds.min, self.bounds.max).map(|_| ())
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }
}

/// Step and horizon as spatial lengths. `|V|` scales like the squared
/// Hessian, so a fixed time step means very different distances across
/// models and bandwidths; [`FlowSpec::settings_at`] converts with `|V(x0)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub step_length: f64,
    pub horizon_length: f64,
    pub bounds: Bounds,
}

impl FlowSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_length > 0.0 && self.horizon_length >= self.step_length && self.horizon_length.is_finite()) {
            return Err(FilamentError::InvalidParameter(format!(
                "need 0 < step_length <= horizon_length, got {} and {}",
                self.step_length, self.horizon_length
            )));
        }
        Bounds::new(self.bounds.min, self.bounds.max).map(|_| ())
    }

    /// Settings whose time unit is one spatial unit at speed `|V(x0)|` of `field`.
    pub fn settings_at<F: DensityField + ?Sized>(
        &self,
        field: &F,
        x0: Vector2<f64>,
        guard: &DegeneracyGuard,
    ) -> Result<FlowSettings> {
        self.validate()?;
        let speed = Sample::at(field, x0, 0.0, guard)?.frame.v.norm();
        if !(speed > 0.0) {
            return Err(FilamentError::ZeroSlope([x0[0], x0[1]]));
        }
        FlowSettings::new(self.step_length / speed, self.horizon_length / speed, self.bounds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    Horizon,
    LeftBounds,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchEnd {
    pub reason: TerminalReason,
    /// The rejected point, for `LeftBounds` and `Degenerate`.
    pub attempted: Option<Vector2<f64>>,
}

/// One accepted point of a branch with the field evaluated there.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub t: f64,
    pub x: Vector2<f64>,
    pub jet: Jet,
    pub frame: EigenFrame,
}

impl Sample {
    pub fn at<F: DensityField + ?Sized>(field: &F, x: Vector2<f64>, t: f64, guard: &DegeneracyGuard) -> Result<Self> {
        let jet = field.eval_all(x);
        let frame = EigenFrame::from_jet(&jet, guard, Some(x))?;
        Ok(Self { t, x, jet, frame })
    }
}

fn velocity(frame: &EigenFrame, sign: f64, normalize: bool) -> Option<Vector2<f64>> {
    if normalize {
        let n = frame.v.norm();
        (n > 0.0).then(|| sign * frame.v / n)
    } else {
        Some(sign * frame.v)
    }
}

/// One RK4 step of size `dt` along `sign * V` from `start`.
///
/// On failure returns the stage point that left the non-degenerate region.
pub fn rk4_step<F: DensityField + ?Sized>(
    field: &F,
    start: &Sample,
    dt: f64,
    sign: f64,
    normalize: bool,
    guard: &DegeneracyGuard,
) -> std::result::Result<Vector2<f64>, Vector2<f64>> {
    let x = start.x;
    let vel = |p: Vector2<f64>| -> std::result::Result<Vector2<f64>, Vector2<f64>> {
        let jet = field.eval_all(p);
        let fr = EigenFrame::from_jet(&jet, guard, None).map_err(|_| p)?;
        velocity(&fr, sign, normalize).ok_or(p)
    };
    let k1 = velocity(&start.frame, sign, normalize).ok_or(x)?;
    let k2 = vel(x + 0.5 * dt * k1)?;
    let k3 = vel(x + 0.5 * dt * k2)?;
    let k4 = vel(x + dt * k3)?;
    Ok(x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// Lazily steps one branch outward from its start.
pub struct BranchStepper<'a, F: ?Sized> {
    field: &'a F,
    settings: FlowSettings,
    guard: DegeneracyGuard,
    sign: f64,
    current: Sample,
    taken: usize,
    full_steps: usize,
    remainder: f64,
    end: Option<BranchEnd>,
}

impl<'a, F: DensityField + ?Sized> BranchStepper<'a, F> {
    /// `sign` is `+1` for the forward branch and `-1` for the backward one.
    pub fn new(field: &'a F, start: Sample, settings: &FlowSettings, guard: &DegeneracyGuard, sign: f64) -> Self {
        let ratio = settings.t_max / settings.step;
        let full_steps = (ratio + 1e-9).floor() as usize;
        let remainder = settings.t_max - full_steps as f64 * settings.step;
        Self {
            field,
            settings: *settings,
            guard: *guard,
            sign,
            current: start,
            taken: 0,
            full_steps,
            remainder: if remainder > 1e-9 * settings.step { remainder } else { 0.0 },
            end: None,
        }
    }

    pub fn end(&self) -> Option<BranchEnd> {
        self.end
    }

    pub fn current(&self) -> &Sample {
        &self.current
    }

    pub fn sign(&self) -> f64 {
        self.sign
    }

    fn stop(&mut self, reason: TerminalReason, attempted: Option<Vector2<f64>>) -> Option<Sample> {
        self.end = Some(BranchEnd { reason, attempted });
        None
    }
}

impl<F: DensityField + ?Sized> Iterator for BranchStepper<'_, F> {
    type Item = Sample;

    fn next(&mut self) -> Option<Sample> {
        if self.end.is_some() {
            return None;
        }
        let dt = if self.taken < self.full_steps {
            self.settings.step
        } else if self.taken == self.full_steps && self.remainder > 0.0 {
            self.remainder
        } else {
            return self.stop(TerminalReason::Horizon, None);
        };
        let x = match rk4_step(self.field, &self.current, dt, self.sign, self.settings.normalize_v, &self.guard) {
            Ok(x) => x,
            Err(p) => return self.stop(TerminalReason::Degenerate, Some(p)),
        };
        if !self.settings.bounds.contains(&x) {
            return self.stop(TerminalReason::LeftBounds, Some(x));
        }
        let t = self.current.t + self.sign * dt;
        match Sample::at(self.field, x, t, &self.guard) {
            Ok(s) => {
                self.taken += 1;
                self.current = s;
                Some(s)
            }
            Err(_) => self.stop(TerminalReason::Degenerate, Some(x)),
        }
    }
}

/// A traced curve, samples ordered by increasing time.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Vector2<f64>>,
    /// Index of `t = 0` in `times`.
    pub origin: usize,
    pub forward_end: Option<BranchEnd>,
    pub backward_end: Option<BranchEnd>,
}

impl Trajectory {
    /// The most severe reason over the traced branches
    /// (`Degenerate` over `LeftBounds` over `Horizon`).
    pub fn terminal_reason(&self) -> TerminalReason {
        [self.forward_end, self.backward_end]
            .iter()
            .flatten()
            .map(|e| e.reason)
            .max()
            .unwrap_or(TerminalReason::Horizon)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn start_sample<F: DensityField + ?Sized>(
    field: &F,
    x0: Vector2<f64>,
    settings: &FlowSettings,
    guard: &DegeneracyGuard,
) -> Result<Sample> {
    settings.validate()?;
    if !settings.bounds.contains(&x0) {
        return Err(FilamentError::OutOfBounds([x0[0], x0[1]]));
    }
    Sample::at(field, x0, 0.0, guard)
}

/// Trace the integral curve through `x0`.
pub fn trace<F: DensityField + ?Sized>(
    field: &F,
    x0: Vector2<f64>,
    settings: &FlowSettings,
    guard: &DegeneracyGuard,
) -> Result<Trajectory> {
    let start = start_sample(field, x0, settings, guard)?;
    let (fwd, bwd) = match settings.direction {
        Direction::Forward => (true, false),
        Direction::Backward => (false, true),
        Direction::Both => (true, true),
    };
    let mut back: Vec<Sample> = Vec::new();
    let mut backward_end = None;
    if bwd {
        let mut it = BranchStepper::new(field, start, settings, guard, -1.0);
        back.extend(&mut it);
        backward_end = it.end();
    }
    let mut times: Vec<f64> = back.iter().rev().map(|s| s.t).collect();
    let mut points: Vec<Vector2<f64>> = back.iter().rev().map(|s| s.x).collect();
    let origin = times.len();
    times.push(0.0);
    points.push(x0);
    let mut forward_end = None;
    if fwd {
        let mut it = BranchStepper::new(field, start, settings, guard, 1.0);
        for s in &mut it {
            times.push(s.t);
            points.push(s.x);
        }
        forward_end = it.end();
    }
    Ok(Trajectory { times, points, origin, forward_end, backward_end })
}

/// Start a single branch, validating `x0` first.
pub fn branch<'a, F: DensityField + ?Sized>(
    field: &'a F,
    x0: Vector2<f64>,
    settings: &FlowSettings,
    guard: &DegeneracyGuard,
    sign: f64,
) -> Result<BranchStepper<'a, F>> {
    let start = start_sample(field, x0, settings, guard)?;
    Ok(BranchStepper::new(field, start, settings, guard, sign))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::AnalyticModel;
    use nalgebra::{Matrix3x2, Vector3};

    /// Hessian `(-1.25, 0, -1)` everywhere, so `V = G = (-1, 0)`.
    struct Uniform;
    impl DensityField for Uniform {
        fn eval_all(&self, _x: Vector2<f64>) -> Jet {
            Jet { f: 1.0, grad: Vector2::new(0.0, 1.0), d2: Vector3::new(-1.25, 0.0, -1.0), grad_d2: Matrix3x2::zeros() }
        }
    }

    fn settings(step: f64, t_max: f64) -> FlowSettings {
        FlowSettings::new(step, t_max, Bounds::square(10.0)).unwrap()
    }

    #[test]
    fn constant_field_gives_a_straight_line() {
        let x0 = Vector2::new(0.5, 0.25);
        let tr = trace(&Uniform, x0, &settings(0.1, 1.05), &DegeneracyGuard::default()).unwrap();
        assert_eq!(tr.times.len(), 2 * 11 + 1);
        assert_eq!(tr.points[tr.origin], x0);
        for (t, p) in tr.times.iter().zip(&tr.points) {
            let want = x0 + *t * Vector2::new(-1.0, 0.0);
            assert!((p - want).norm() < 1e-14, "t={t}");
        }
        // Ends on the horizon exactly, via a final partial step.
        assert!((tr.times.last().unwrap() - 1.05).abs() < 1e-14);
        assert!((tr.times[0] + 1.05).abs() < 1e-14);
        assert_eq!(tr.terminal_reason(), TerminalReason::Horizon);
    }

    #[test]
    fn flow_spec_clock_is_spatial() {
        let spec = FlowSpec { step_length: 0.02, horizon_length: 1.0, bounds: Bounds::square(5.0) };
        let g = DegeneracyGuard::default();
        let s = spec.settings_at(&Uniform, Vector2::zeros(), &g).unwrap();
        assert_eq!((s.step, s.t_max), (0.02, 1.0));
        let m = AnalyticModel::elongated_gaussian(2.0, 1.0).unwrap();
        let x0 = Vector2::new(1.0, 0.4);
        let s = spec.settings_at(&m, x0, &g).unwrap();
        let speed = Sample::at(&m, x0, 0.0, &g).unwrap().frame.v.norm();
        assert!((s.step * speed - 0.02).abs() < 1e-15 && (s.t_max * speed - 1.0).abs() < 1e-13);
        assert!(FlowSpec { step_length: 2.0, ..spec }.validate().is_err());
    }

    #[test]
    fn flow_spec_clock_rejects_zero_speed() {
        /// Hessian `(1.5, 1, 0)`: the second eigenvector lies on the zero ray of `G`.
        struct Stalled;
        impl DensityField for Stalled {
            fn eval_all(&self, _x: Vector2<f64>) -> Jet {
                Jet { f: 1.0, grad: Vector2::new(0.0, 1.0), d2: Vector3::new(1.5, 1.0, 0.0), grad_d2: Matrix3x2::zeros() }
            }
        }
        let spec = FlowSpec { step_length: 0.02, horizon_length: 1.0, bounds: Bounds::square(5.0) };
        let r = spec.settings_at(&Stalled, Vector2::zeros(), &DegeneracyGuard::default());
        assert!(matches!(r, Err(FilamentError::ZeroSlope(_))), "{r:?}");
    }

    #[test]
    fn leaving_bounds_is_recorded() {
        let s = FlowSettings::new(0.1, 5.0, Bounds::new([-1.0, -1.0], [1.0, 1.0]).unwrap())
            .unwrap()
            .with_direction(Direction::Forward);
        let tr = trace(&Uniform, Vector2::zeros(), &s, &DegeneracyGuard::default()).unwrap();
        let end = tr.forward_end.unwrap();
        assert_eq!(end.reason, TerminalReason::LeftBounds);
        assert!(end.attempted.unwrap()[0] < -1.0);
        assert!(tr.points.iter().all(|p| s.bounds.contains(p)));
    }

    #[test]
    fn invalid_start_is_an_error() {
        let s = settings(0.1, 1.0);
        assert!(matches!(
            trace(&Uniform, Vector2::new(20.0, 0.0), &s, &DegeneracyGuard::default()),
            Err(FilamentError::OutOfBounds(_))
        ));
        let iso = AnalyticModel::elongated_gaussian(1.0 + 1e-14, 1.0).unwrap();
        assert!(trace(&iso, Vector2::zeros(), &s, &DegeneracyGuard::default()).is_err());
        assert!(FlowSettings::new(0.0, 1.0, Bounds::square(1.0)).is_err());
        assert!(FlowSettings::new(0.1, 0.05, Bounds::square(1.0)).is_err());
        assert!(Bounds::new([0.0, 0.0], [0.0, 1.0]).is_err());
    }

    #[test]
    fn degenerate_stop_excludes_the_bad_point() {
        // Near-isotropic Gaussian: the Hessian is degenerate at the centre.
        let m = AnalyticModel::elongated_gaussian(1.0 + 1e-7, 1.0).unwrap();
        let guard = DegeneracyGuard::new(1e-3).unwrap();
        let x0 = Vector2::new(2.0, 0.0);
        let s = settings(0.5, 400.0);
        let tr = trace(&m, x0, &s, &guard).unwrap();
        for end in [tr.forward_end, tr.backward_end].iter().flatten() {
            if end.reason == TerminalReason::Degenerate {
                let p = end.attempted.unwrap();
                assert!(!guard.accepts(&m.eval_all(p).d2));
            }
        }
        for p in &tr.points {
            assert!(guard.accepts(&m.eval_all(*p).d2));
        }
    }

    #[test]
    fn forward_then_backward_returns_to_start() {
        let m = AnalyticModel::elongated_gaussian(2.0, 1.0).unwrap();
        let guard = DegeneracyGuard::default();
        let x0 = Vector2::new(0.5, 0.3);
        let s = settings(1e-3, 2.0).with_direction(Direction::Forward);
        let out = trace(&m, x0, &s, &guard).unwrap();
        let end = *out.points.last().unwrap();
        let back = trace(&m, end, &s.with_direction(Direction::Backward), &guard).unwrap();
        assert!((back.points[0] - x0).norm() < 1e-8);
    }
}
