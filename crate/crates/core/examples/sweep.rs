//! Kolmogorov distances over a bandwidth grid for KSD at d = 27.

use hidim_ustat::experiments::{run_kdist_sweep, ExperimentConfig, LimitKind, NRule, StatKind, SweepVar};

fn main() -> hidim_ustat::Result<()> {
    let mut cfg = ExperimentConfig::new(StatKind::KsdRbf, 27, 50);
    cfg.seeds = 4;
    cfg.reps_per_seed = 100;
    let res = run_kdist_sweep(&cfg, &SweepVar::Gamma(vec![2.0, 8.0, 32.0, 128.0]), NRule::Fixed)?;
    println!("{:>8} {:>10} {:>10} {:>8}  regime", "gamma", "ks_gauss", "ks_gamma", "rho_d");
    for r in &res.rows {
        println!(
            "{:>8} {:>10.4} {:>10.4} {:>8.2}  {}",
            r.value,
            r.ks_mean(LimitKind::Gauss).unwrap_or(f64::NAN),
            r.ks_mean(LimitKind::Gamma).unwrap_or(f64::NAN),
            r.rho_d,
            r.regime.name()
        );
    }
    Ok(())
}
