//! Sup-path error of the estimated integral curve against the rate
//! sqrt(log n / (n h^5)).

use filament::density::AnalyticModel;
use filament::flow::{Bounds, FlowSpec};
use filament::mc::{run_rate, ExperimentConfig, StartSpec};

fn main() -> filament::Result<()> {
    let config = ExperimentConfig {
        model: AnalyticModel::elongated_gaussian(0.5, 0.25)?,
        n_grid: vec![2000, 8000, 32000],
        beta: 1.0,
        reps: 30,
        z_grid: vec![],
        seed: 1,
        starts: StartSpec::Points { points: vec![[0.5, 0.1]] },
        flow: FlowSpec { step_length: 0.001, horizon_length: 0.025, bounds: Bounds::square(10.0) },
        guard_delta: 1e-8,
    };
    let report = run_rate(&config)?;
    for l in &report.levels {
        println!("n = {:>6}, h = {:.4}, rate {:.4}, median error {:.5}", l.n, l.h, l.rate, l.median_error);
    }
    println!("log-log slope {:.3}", report.slope);
    Ok(())
}
