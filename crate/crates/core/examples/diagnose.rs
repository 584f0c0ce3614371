//! Regime classification from closed-form moments, and the predicted order of
//! rho_d across bandwidths.

use hidim_ustat::experiments::{diagnose, predict_rho_order, StatKind};
use hidim_ustat::moments::closed_form_ksd_moments;

fn main() -> hidim_ustat::Result<()> {
    let (d, n) = (2000usize, 50);
    for gamma in [10.0, (d as f64).sqrt(), d as f64, 1e5] {
        let ms = closed_form_ksd_moments(d, gamma, 1.0)?;
        let dg = diagnose(&ms, n);
        let order = predict_rho_order(StatKind::KsdRbf, d, gamma, 1.0)?;
        println!(
            "gamma {gamma:>9.1}: rho_d {:>9.3}  {:<20} -> {:<22} predicted {}",
            dg.rho_d,
            dg.regime.name(),
            dg.predicted_limit,
            order.label()
        );
    }
    Ok(())
}
