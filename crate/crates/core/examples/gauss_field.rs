//! Supremum of the limiting Gaussian field on a rescaled filament, against
//! the exp(-2 e^(-z)) law.

use filament::density::AnalyticModel;
use filament::kernel::constants;
use filament::mc::{simulate_gauss_field, GaussFieldConfig};
use filament::ridge::Polyline;
use nalgebra::Vector2;

fn main() -> filament::Result<()> {
    let model = AnalyticModel::elongated_gaussian(2.0, 1.0)?;
    let filament = Polyline::open(vec![Vector2::new(0.5, 0.0), Vector2::new(3.0, 0.0)]);
    let config = GaussFieldConfig::new(filament, vec![0.5, 0.25], 200, 1);
    for l in simulate_gauss_field(&config, &model, constants())? {
        println!(
            "h = {:.3}: KS {:.3}, P(sup < b_h(0)) {:.3}, pooled variance {:.3}",
            l.h, l.ks, l.p_below_b_h0, l.pooled_variance
        );
    }
    Ok(())
}
