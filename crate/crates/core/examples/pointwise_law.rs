//! Scaled deviation of one estimated ridge crossing, compared with its
//! limiting variance, and its linearization through phi1.

use filament::density::AnalyticModel;
use filament::flow::{Bounds, FlowSpec};
use filament::mc::{run_pointwise, ExperimentConfig, StartSpec};
use nalgebra::Vector2;

fn main() -> filament::Result<()> {
    let n = 20_000;
    let config = ExperimentConfig {
        model: AnalyticModel::elongated_gaussian(2.0, 1.0)?,
        n_grid: vec![n],
        // h = 1.3.
        beta: n as f64 * 1.3f64.powi(9),
        reps: 100,
        z_grid: vec![],
        seed: 1,
        starts: StartSpec::Points { points: vec![[2.0, 0.0]] },
        flow: FlowSpec { step_length: 0.005, horizon_length: 2.0, bounds: Bounds::square(10.0) },
        guard_delta: 1e-8,
    };
    for l in run_pointwise(&config, Vector2::new(2.0, 0.0))? {
        println!("n = {}, h = {:.3}", l.n, l.h);
        println!("  mean {:+.3} (SE {:.3})", l.mean, l.standard_error);
        println!("  variance / theory {:.3}", l.variance_ratio);
        println!("  phi1 variance / theory {:.3}", l.phi1_variance_ratio);
        println!("  corr(theta_hat - theta, -phi1) {:.3}", l.linearization_correlation);
    }
    Ok(())
}
