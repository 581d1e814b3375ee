//! Monte Carlo distribution of the standardized sup deviation against the
//! extreme-value limit.

use filament::density::AnalyticModel;
use filament::flow::{Bounds, FlowSpec};
use filament::mc::{run_sup_deviation, ExperimentConfig, StartSpec};

fn main() -> filament::Result<()> {
    let config = ExperimentConfig {
        model: AnalyticModel::elongated_gaussian(2.0, 1.0)?,
        n_grid: vec![4000, 16000],
        beta: 1.0,
        reps: 40,
        z_grid: vec![-1.0, 0.0, 1.0, 2.0, 3.0],
        seed: 1,
        starts: StartSpec::Segment { from: [0.5, 0.4], to: [3.5, 0.4], count: 41 },
        flow: FlowSpec { step_length: 0.005, horizon_length: 2.0, bounds: Bounds::square(4.0) },
        guard_delta: 1e-8,
    };
    for level in run_sup_deviation(&config)? {
        let paired: usize = level.records.iter().map(|r| r.paired).sum();
        let unpaired: usize = level.records.iter().map(|r| r.unpaired).sum();
        println!(
            "n = {}, h = {:.4}, c = {:.4}, {} failures, {paired} paired and {unpaired} unpaired starts",
            level.n,
            level.h,
            level.c,
            level.failures.len()
        );
        for p in &level.cdf {
            println!("  z = {:+.1}: empirical {:.3}, limit {:.3}", p.z, p.empirical, p.limit);
        }
    }
    Ok(())
}
