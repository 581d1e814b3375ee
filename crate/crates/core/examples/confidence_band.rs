//! Asymptotic 95% confidence band around a filament estimated from points
//! drawn around a circle.

use filament::bands::{band_radii, z_from_level};
use filament::density::{default_bandwidth, AnalyticModel, KdeField};
use filament::eigenfield::DegeneracyGuard;
use filament::flow::{Bounds, FlowSpec};
use filament::kernel::constants;
use filament::ridge::estimate_filament_scaled;
use nalgebra::Vector2;

fn main() -> filament::Result<()> {
    let model = AnalyticModel::ring(1.0, 0.1)?;
    let n = 4000;
    let h = default_bandwidth(n, 1.0)?;
    let kde = KdeField::new(model.sample(n, 1), h)?;
    let guard = DegeneracyGuard::default();

    // Away from the two rays where the eigenvector slope is -2 and V vanishes.
    let starts: Vec<Vector2<f64>> = [0.0f64, 30.0, 60.0, 90.0, 150.0, 180.0, 210.0, 240.0, 270.0, 330.0]
        .iter()
        .map(|deg| 1.06 * Vector2::new(deg.to_radians().cos(), deg.to_radians().sin()))
        .collect();
    let spec = FlowSpec { step_length: 0.005, horizon_length: 1.0, bounds: Bounds::square(2.0) };
    let est = estimate_filament_scaled(&kde, &starts, &spec, &guard, 0.05)?;

    // Miss probability 5%.
    let z = z_from_level(0.05)?;
    let band = band_radii(&est.polyline, &kde, constants(), n, h, z, &guard)?;
    println!("n = {n}, h = {h:.4}, z = {z:.4}, c = {:.4}, b_h = {:.4}", band.c, band.b_h);
    for (p, r) in est.polyline.points().iter().zip(&band.radii) {
        println!("  ({:+.4}, {:+.4})  |x| = {:.4}, radius {r:.4}", p[0], p[1], p.norm());
    }
    Ok(())
}
