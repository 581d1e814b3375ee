//! Filament estimate from a KDE of points drawn around a circle.

use filament::density::{default_bandwidth, AnalyticModel, KdeField};
use filament::eigenfield::DegeneracyGuard;
use filament::flow::{Bounds, FlowSpec};
use filament::ridge::{estimate_filament_scaled, hausdorff, Polyline};
use nalgebra::Vector2;

/// Starts on a circle of radius 1.06, where the radial direction is the
/// second Hessian eigenvector. `V` vanishes where that eigenvector has slope
/// -2, so starts within 5 degrees of those two rays are skipped.
fn ring_starts() -> Vec<Vector2<f64>> {
    let ray = (-2.0f64).atan().to_degrees().rem_euclid(180.0);
    (0..72)
        .map(|k| 5.0 * k as f64)
        .filter(|deg| {
            let off = (deg - ray).rem_euclid(180.0);
            off.min(180.0 - off) > 5.0
        })
        .map(|deg: f64| 1.06 * Vector2::new(deg.to_radians().cos(), deg.to_radians().sin()))
        .collect()
}

fn main() -> filament::Result<()> {
    let model = AnalyticModel::ring(1.0, 0.1)?;
    let n = 4000;
    let h = default_bandwidth(n, 1.0)?;
    let kde = KdeField::new(model.sample(n, 1), h)?;
    let guard = DegeneracyGuard::default();

    let starts = ring_starts();
    let spec = FlowSpec { step_length: 0.005, horizon_length: 1.0, bounds: Bounds::square(2.0) };
    let est = estimate_filament_scaled(&kde, &starts, &spec, &guard, 0.05)?;

    let (lo, hi) = est.polyline.points().iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p.norm()), hi.max(p.norm())));
    println!("n = {n}, h = {h:.4}");
    println!(
        "{} hits from {} starts, {} failures, {} vertices (closed: {})",
        est.hits.iter().filter(|h| h.found).count(),
        starts.len(),
        est.failures.len(),
        est.polyline.len(),
        est.polyline.closed
    );
    println!("vertex radius in [{lo:.4}, {hi:.4}]");

    let truth = Polyline::closed((0..360).map(|i| model.filament_point(i as f64 * std::f64::consts::TAU / 360.0)).collect());
    println!("Hausdorff distance to the unit circle: {:.4}", hausdorff(&est.polyline, &truth)?);
    Ok(())
}
