//! Closed-form moments of the summand next to a Monte-Carlo estimate.

use hidim_ustat::model::{CovSpec, MeanShiftModel, RngStream};
use hidim_ustat::moments::{closed_form_ksd_moments, empirical_moments_with, MomentOptions};
use hidim_ustat::ustat::SummandSpec;

fn main() -> hidim_ustat::Result<()> {
    let (d, gamma, mu2) = (20usize, 20.0, 4.0);
    let closed = closed_form_ksd_moments(d, gamma, mu2)?;
    let model = MeanShiftModel::first_coordinate(d, mu2.sqrt(), CovSpec::Identity)?;
    let spec = SummandSpec::ksd(gamma, model.null())?;
    let opts = MomentOptions { bootstrap: 100, ..MomentOptions::default() };
    let rep = empirical_moments_with(&spec, &model, 4000, RngStream::new(20240, 0, 0), &opts)?;
    let se = rep.errors.expect("bootstrap requested");
    let mc = rep.moments;
    println!("{:<12} {:>14} {:>14} {:>10}", "", "closed", "monte-carlo", "se");
    println!("{:<12} {:>14.6e} {:>14.6e} {:>10.2e}", "D", closed.mean, mc.mean, se.mean);
    println!("{:<12} {:>14.6e} {:>14.6e} {:>10.2e}", "sigma2_cond", closed.sigma2_cond(), mc.sigma2_cond(), se.sigma2_cond);
    println!("{:<12} {:>14.6e} {:>14.6e} {:>10.2e}", "sigma2_full", closed.sigma2_full(), mc.sigma2_full(), se.sigma2_full);
    println!("rho_d = {:.3}", closed.rho_d());
    Ok(())
}
