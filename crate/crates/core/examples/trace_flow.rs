//! Integral curve of the second Hessian eigenvector field on the elongated
//! Gaussian, and the ridge crossing found along it.

use filament::density::AnalyticModel;
use filament::eigenfield::DegeneracyGuard;
use filament::flow::{trace, Bounds, FlowSpec};
use filament::ridge::find_theta;
use nalgebra::Vector2;

fn main() -> filament::Result<()> {
    let model = AnalyticModel::elongated_gaussian(2.0, 1.0)?;
    let guard = DegeneracyGuard::default();
    let x0 = Vector2::new(1.5, 0.6);
    let spec = FlowSpec { step_length: 0.01, horizon_length: 1.0, bounds: Bounds::square(8.0) };
    let settings = spec.settings_at(&model, x0, &guard)?;

    let path = trace(&model, x0, &settings, &guard)?;
    println!("{} points, ended by {:?}", path.points.len(), path.terminal_reason());
    for p in path.points.iter().step_by(25) {
        println!("  ({:+.4}, {:+.4})", p[0], p[1]);
    }

    let hit = find_theta(&model, x0, &settings, &guard, settings.t_max)?;
    println!(
        "crossing at ({:+.6}, {:+.2e}), theta = {:+.4}, lambda2 = {:.4}",
        hit.point[0], hit.point[1], hit.theta, hit.lambda2
    );
    Ok(())
}
