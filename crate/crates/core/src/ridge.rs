//! Ridge crossings along integral curves.
//!
//! Along a curve `X(t)` the directional derivative `a(t) = <grad f, V>(X(t))`
//! changes sign where the curve meets the filament. The filament point for a
//! start `x0` is the crossing with the smallest `|t|` at which `lambda2 < 0`.

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{DensityField, Jet};
use crate::eigenfield::{grad_v_from_jet, DegeneracyGuard, EigenFrame};
use crate::error::{FilamentError, Result};
use crate::flow::{rk4_step, BranchStepper, Direction, FlowSettings, FlowSpec, Sample, Trajectory};

/// `<grad f, V>` at a sample.
pub fn a_value(jet: &Jet, frame: &EigenFrame) -> f64 {
    jet.grad.dot(&frame.v)
}

/// `d/dt a` along the flow, as a function of position:
/// `grad f^T (grad V) V + lambda2 |V|^2`.
pub fn a_tilde_prime(jet: &Jet, guard: &DegeneracyGuard, at: Option<Vector2<f64>>) -> Result<f64> {
    let frame = EigenFrame::from_jet(jet, guard, at)?;
    let gv = grad_v_from_jet(jet, guard, at)?;
    Ok(jet.grad.dot(&(gv * frame.v)) + frame.lambda2 * frame.v.norm_squared())
}

/// `(t, a(t))` at every sample of a trajectory.
pub fn a_of_t<F: DensityField + ?Sized>(
    field: &F,
    traj: &Trajectory,
    guard: &DegeneracyGuard,
) -> Result<Vec<(f64, f64)>> {
    traj.times
        .iter()
        .zip(&traj.points)
        .map(|(&t, &x)| {
            let jet = field.eval_all(x);
            let fr = EigenFrame::from_jet(&jet, guard, Some(x))?;
            Ok((t, a_value(&jet, &fr)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilamentHit {
    pub start: [f64; 2],
    pub theta: f64,
    pub point: [f64; 2],
    pub lambda2: f64,
    pub a_prime: f64,
    pub found: bool,
}

impl FilamentHit {
    fn not_found(x0: Vector2<f64>) -> Self {
        Self { start: [x0[0], x0[1]], theta: 0.0, point: [x0[0], x0[1]], lambda2: 0.0, a_prime: 0.0, found: false }
    }

    pub fn point(&self) -> Vector2<f64> {
        Vector2::new(self.point[0], self.point[1])
    }
}

/// One scanned sample: time, `a`, and `lambda2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub t: f64,
    pub a: f64,
    pub lambda2: f64,
}

impl ScanPoint {
    fn of(s: &Sample) -> Self {
        Self { t: s.t, a: a_value(&s.jet, &s.frame), lambda2: s.frame.lambda2 }
    }
}

/// Relative tolerance on `|a|` for the bisection, against the largest `|a|`
/// seen during the scan.
pub const ROOT_TOL: f64 = 1e-10;

fn qualifies(lo: &ScanPoint, hi: &ScanPoint) -> bool {
    (lo.a == 0.0 || lo.a * hi.a < 0.0) && lo.lambda2 < 0.0 && hi.lambda2 < 0.0
}

/// Whether `<grad f, e2>` changes sign across the step, with the unit
/// eigenvector `e2` oriented consistently at both ends. A sign change of `a`
/// that comes only from `V` passing through zero fails this test.
fn projection_flips(lo: &Sample, hi: &Sample) -> bool {
    let (n_lo, n_hi) = (lo.frame.v.norm(), hi.frame.v.norm());
    if n_lo == 0.0 || n_hi == 0.0 {
        return false;
    }
    let e_lo = lo.frame.v / n_lo;
    let mut e_hi = hi.frame.v / n_hi;
    if e_lo.dot(&e_hi) < 0.0 {
        e_hi = -e_hi;
    }
    let (p_lo, p_hi) = (lo.jet.grad.dot(&e_lo), hi.jet.grad.dot(&e_hi));
    p_lo == 0.0 || p_lo * p_hi < 0.0
}

struct Candidate {
    t: f64,
    sample: Sample,
}

/// Bisect inside one RK4 step of length `dt` starting at `lo`.
fn refine<F: DensityField + ?Sized>(
    field: &F,
    lo: &Sample,
    dt: f64,
    sign: f64,
    scale: f64,
    settings: &FlowSettings,
    guard: &DegeneracyGuard,
) -> Result<Candidate> {
    let a_lo = a_value(&lo.jet, &lo.frame);
    if a_lo == 0.0 {
        return Ok(Candidate { t: lo.t, sample: *lo });
    }
    let (mut tau_lo, mut tau_hi) = (0.0, dt);
    let mut best: Option<Sample> = None;
    let tol = ROOT_TOL * scale;
    for _ in 0..200 {
        let tau = 0.5 * (tau_lo + tau_hi);
        let x = rk4_step(field, lo, tau, sign, settings.normalize_v, guard)
            .map_err(|p| FilamentError::Degenerate { at: Some([p[0], p[1]]), d2: [f64::NAN; 3] })?;
        let s = Sample::at(field, x, lo.t + sign * tau, guard)?;
        let a = a_value(&s.jet, &s.frame);
        best = Some(s);
        if a.abs() < tol || tau_hi - tau_lo < 1e-15 * dt.max(1e-300) {
            break;
        }
        if (a > 0.0) == (a_lo > 0.0) {
            tau_lo = tau;
        } else {
            tau_hi = tau;
        }
    }
    let sample = best.expect("at least one bisection step");
    Ok(Candidate { t: sample.t, sample })
}

/// Walk one branch for one step, returning a refined crossing if the new
/// bracket contains one within `a_star`.
struct Scanner<'a, F: ?Sized> {
    stepper: BranchStepper<'a, F>,
    prev: Sample,
    done: bool,
}

impl<'a, F: DensityField + ?Sized> Scanner<'a, F> {
    fn advance(
        &mut self,
        field: &F,
        a_star: f64,
        scale: &mut f64,
        scan: &mut Vec<ScanPoint>,
        settings: &FlowSettings,
        guard: &DegeneracyGuard,
    ) -> Result<Option<Candidate>> {
        if self.done {
            return Ok(None);
        }
        if self.prev.t.abs() >= a_star {
            self.done = true;
            return Ok(None);
        }
        let Some(next) = self.stepper.next() else {
            self.done = true;
            return Ok(None);
        };
        let lo = ScanPoint::of(&self.prev);
        let hi = ScanPoint::of(&next);
        scan.push(hi);
        *scale = scale.max(hi.a.abs());
        let prev = self.prev;
        self.prev = next;
        if qualifies(&lo, &hi) && projection_flips(&prev, &next) {
            let sign = self.stepper.sign();
            let dt = (next.t - prev.t).abs();
            let c = refine(field, &prev, dt, sign, *scale, settings, guard)?;
            if c.t.abs() <= a_star {
                return Ok(Some(c));
            }
            self.done = true;
        }
        Ok(None)
    }
}

/// Find the first qualifying ridge crossing on the curve through `x0`,
/// scanning both directions outward in `|t|` up to `a_star`.
pub fn find_theta<F: DensityField + ?Sized>(
    field: &F,
    x0: Vector2<f64>,
    flow: &FlowSettings,
    guard: &DegeneracyGuard,
    a_star: f64,
) -> Result<FilamentHit> {
    find_theta_scanned(field, x0, flow, guard, a_star).map(|(h, _)| h)
}

/// [`find_theta`], also returning every scanned sample.
pub fn find_theta_scanned<F: DensityField + ?Sized>(
    field: &F,
    x0: Vector2<f64>,
    flow: &FlowSettings,
    guard: &DegeneracyGuard,
    a_star: f64,
) -> Result<(FilamentHit, Vec<ScanPoint>)> {
    if !(a_star.abs() <= flow.t_max) {
        return Err(FilamentError::InvalidParameter(format!(
            "a_star ({a_star}) exceeds the flow horizon ({})",
            flow.t_max
        )));
    }
    let a_star = a_star.abs();
    flow.validate()?;
    if !flow.bounds.contains(&x0) {
        return Err(FilamentError::OutOfBounds([x0[0], x0[1]]));
    }
    let start = Sample::at(field, x0, 0.0, guard)?;
    let s0 = ScanPoint::of(&start);
    let mut scan = vec![s0];
    if s0.a == 0.0 && s0.lambda2 < 0.0 {
        return Ok((hit_from(field, &start, x0, guard)?, scan));
    }
    let mut scale = s0.a.abs();
    let make = |sign: f64| Scanner {
        stepper: BranchStepper::new(field, start, flow, guard, sign),
        prev: start,
        done: false,
    };
    let mut fwd = make(1.0);
    let mut bwd = make(-1.0);
    match flow.direction {
        Direction::Forward => bwd.done = true,
        Direction::Backward => fwd.done = true,
        Direction::Both => {}
    }
    while !(fwd.done && bwd.done) {
        let cf = fwd.advance(field, a_star, &mut scale, &mut scan, flow, guard)?;
        let cb = bwd.advance(field, a_star, &mut scale, &mut scan, flow, guard)?;
        let chosen = match (cf, cb) {
            (None, None) => continue,
            (Some(f), Some(_)) => f,
            (Some(f), None) => {
                // A backward crossing in the next bracket could still be nearer.
                match bwd.advance(field, a_star, &mut scale, &mut scan, flow, guard)? {
                    Some(b) if b.t.abs() < f.t.abs() - flow.step => b,
                    _ => f,
                }
            }
            (None, Some(b)) => match fwd.advance(field, a_star, &mut scale, &mut scan, flow, guard)? {
                Some(f) if f.t.abs() <= b.t.abs() + flow.step => f,
                _ => b,
            },
        };
        return Ok((hit_from(field, &chosen.sample, x0, guard)?, scan));
    }
    Ok((FilamentHit::not_found(x0), scan))
}

fn hit_from<F: DensityField + ?Sized>(
    _field: &F,
    s: &Sample,
    x0: Vector2<f64>,
    guard: &DegeneracyGuard,
) -> Result<FilamentHit> {
    Ok(FilamentHit {
        start: [x0[0], x0[1]],
        theta: s.t,
        point: [s.x[0], s.x[1]],
        lambda2: s.frame.lambda2,
        a_prime: a_tilde_prime(&s.jet, guard, Some(s.x))?,
        found: true,
    })
}

/// An ordered vertex list, optionally closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub vertices: Vec<[f64; 2]>,
    pub closed: bool,
}

impl Polyline {
    pub fn open(vertices: Vec<Vector2<f64>>) -> Self {
        Self { vertices: vertices.iter().map(|v| [v[0], v[1]]).collect(), closed: false }
    }

    pub fn closed(vertices: Vec<Vector2<f64>>) -> Self {
        Self { closed: true, ..Self::open(vertices) }
    }

    pub fn points(&self) -> Vec<Vector2<f64>> {
        self.vertices.iter().map(|v| Vector2::new(v[0], v[1])).collect()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Segments as endpoint pairs, including the closing one.
    pub fn segments(&self) -> Vec<(Vector2<f64>, Vector2<f64>)> {
        let p = self.points();
        let mut s: Vec<_> = p.windows(2).map(|w| (w[0], w[1])).collect();
        if self.closed && p.len() > 2 {
            s.push((p[p.len() - 1], p[0]));
        }
        s
    }

    pub fn length(&self) -> f64 {
        self.segments().iter().map(|(a, b)| (b - a).norm()).sum()
    }

    pub fn reversed(&self) -> Self {
        let mut v = self.vertices.clone();
        v.reverse();
        Self { vertices: v, closed: self.closed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartFailure {
    pub index: usize,
    pub start: [f64; 2],
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilamentEstimate {
    pub starts: Vec<[f64; 2]>,
    /// One entry per start that could be traced.
    pub hits: Vec<FilamentHit>,
    pub failures: Vec<StartFailure>,
    pub polyline: Polyline,
}

/// Ridge crossing for every start, merged and chained into a polyline.
pub fn estimate_filament<F: DensityField + ?Sized>(
    field: &F,
    starts: &[Vector2<f64>],
    flow: &FlowSettings,
    guard: &DegeneracyGuard,
    a_star: f64,
    merge_radius: f64,
) -> Result<FilamentEstimate> {
    estimate_with(starts, merge_radius, |x0| find_theta(field, x0, flow, guard, a_star))
}

/// [`estimate_filament`] with a clock per start from `spec`, searching the
/// whole horizon.
pub fn estimate_filament_scaled<F: DensityField + ?Sized>(
    field: &F,
    starts: &[Vector2<f64>],
    spec: &FlowSpec,
    guard: &DegeneracyGuard,
    merge_radius: f64,
) -> Result<FilamentEstimate> {
    estimate_with(starts, merge_radius, |x0| {
        let flow = spec.settings_at(field, x0, guard)?;
        find_theta(field, x0, &flow, guard, flow.t_max)
    })
}

fn estimate_with<D>(starts: &[Vector2<f64>], merge_radius: f64, detect: D) -> Result<FilamentEstimate>
where
    D: Fn(Vector2<f64>) -> Result<FilamentHit> + Sync,
{
    if starts.is_empty() {
        return Err(FilamentError::InvalidParameter("no start points".into()));
    }
    let results: Vec<Result<FilamentHit>> = starts.par_iter().map(|x0| detect(*x0)).collect();
    let mut hits = Vec::new();
    let mut failures = Vec::new();
    for (i, (r, x0)) in results.into_iter().zip(starts).enumerate() {
        match r {
            Ok(h) => hits.push(h),
            Err(e) => failures.push(StartFailure { index: i, start: [x0[0], x0[1]], reason: e.to_string() }),
        }
    }
    let found: Vec<Vector2<f64>> = hits.iter().filter(|h| h.found).map(|h| h.point()).collect();
    let polyline = assemble(&found, merge_radius);
    Ok(FilamentEstimate { starts: starts.iter().map(|s| [s[0], s[1]]).collect(), hits, failures, polyline })
}

pub fn assemble(points: &[Vector2<f64>], merge_radius: f64) -> Polyline {
    let mut kept: Vec<Vector2<f64>> = Vec::new();
    for p in points {
        if kept.iter().all(|q| (p - q).norm() >= merge_radius) {
            kept.push(*p);
        }
    }
    if kept.len() < 3 {
        return Polyline::open(kept);
    }
    let centroid = kept.iter().sum::<Vector2<f64>>() / kept.len() as f64;
    let first = (0..kept.len())
        .max_by(|&i, &j| (kept[i] - centroid).norm().total_cmp(&(kept[j] - centroid).norm()))
        .unwrap();
    let mut used = vec![false; kept.len()];
    let mut order = vec![first];
    used[first] = true;
    while order.len() < kept.len() {
        let last = kept[*order.last().unwrap()];
        let next = (0..kept.len())
            .filter(|&i| !used[i])
            .min_by(|&i, &j| (kept[i] - last).norm().total_cmp(&(kept[j] - last).norm()))
            .unwrap();
        used[next] = true;
        order.push(next);
    }
    let ordered: Vec<Vector2<f64>> = order.iter().map(|&i| kept[i]).collect();
    let mut seg: Vec<f64> = ordered.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    seg.sort_by(f64::total_cmp);
    let median = seg[seg.len() / 2];
    let gap = (ordered[ordered.len() - 1] - ordered[0]).norm();
    if ordered.len() >= 4 && gap <= 2.0 * median {
        Polyline::closed(ordered)
    } else {
        Polyline::open(ordered)
    }
}

fn point_segment_distance(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let ab = b - a;
    let l2 = ab.norm_squared();
    if l2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / l2).clamp(0.0, 1.0);
    (p - (a + t * ab)).norm()
}

fn resample(line: &Polyline, step: f64) -> Vec<Vector2<f64>> {
    let segs = line.segments();
    if segs.is_empty() {
        return line.points();
    }
    let mut out = Vec::new();
    for (a, b) in &segs {
        let k = (((b - a).norm() / step).ceil() as usize).max(1);
        for i in 0..k {
            out.push(a + (b - a) * (i as f64 / k as f64));
        }
    }
    if !line.closed {
        out.push(segs.last().unwrap().1);
    }
    out
}

fn directed(from: &[Vector2<f64>], to: &Polyline) -> f64 {
    let segs = to.segments();
    let pts = to.points();
    from.iter()
        .map(|p| {
            if segs.is_empty() {
                (p - pts[0]).norm()
            } else {
                segs.iter().map(|(a, b)| point_segment_distance(p, a, b)).fold(f64::INFINITY, f64::min)
            }
        })
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between two polylines, sampling each at a
/// tenth of the shortest segment and measuring exactly to the other's segments.
pub fn hausdorff(a: &Polyline, b: &Polyline) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(FilamentError::ShortPolyline(1));
    }
    let min_seg = a
        .segments()
        .iter()
        .chain(b.segments().iter())
        .map(|(p, q)| (q - p).norm())
        .filter(|l| *l > 0.0)
        .fold(f64::INFINITY, f64::min);
    let total = a.length() + b.length();
    let step = if min_seg.is_finite() { (min_seg / 10.0).max(total / 2e5) } else { 1.0 };
    let sa = resample(a, step);
    let sb = resample(b, step);
    Ok(directed(&sa, b).max(directed(&sb, a)))
}
