//! The candidate limit laws for one moment set, with tail probabilities and
//! the Berry-Esseen bound.

use hidim_ustat::limits::{chisq_matched_limit, gamma_matched_limit, limit_cdf, limit_moments, nondegenerate_limit};
use hidim_ustat::moments::{berry_esseen_bound, closed_form_ksd_moments};

fn main() -> hidim_ustat::Result<()> {
    let (d, n) = (2000, 50);
    let ms = closed_form_ksd_moments(d, d as f64, 4.0)?;
    println!("rho_d = {:.2}, sqrt(n-1) = {:.2}", ms.rho_d(), ((n - 1) as f64).sqrt());
    for (name, spec) in [
        ("gauss", nondegenerate_limit(&ms, n)?),
        ("gamma", gamma_matched_limit(&ms, n)?),
        ("chisq1", chisq_matched_limit(&ms, n)?),
    ] {
        let m = limit_moments(&spec)?;
        let t = m.mean + 2.0 * m.variance.sqrt();
        println!(
            "{name:<7} mean {:.4e}  sd {:.4e}  skew {:+.3}  P(> mean + 2 sd) = {:.4}",
            m.mean,
            m.variance.sqrt(),
            m.skewness(),
            1.0 - limit_cdf(&spec, t)?
        );
    }
    println!("Berry-Esseen bound (nu = 3): {:.3}", berry_esseen_bound(&ms, n, 3)?);
    Ok(())
}
