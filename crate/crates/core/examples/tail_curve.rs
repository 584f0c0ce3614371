//! Simulated survival curve of D_n against the limit laws, written as CSV.
//!
//! `cargo run --release --example tail_curve > tail.csv`

use hidim_ustat::experiments::{run_tail_curve, ExperimentConfig, LimitKind, StatKind};

fn main() -> hidim_ustat::Result<()> {
    let mut cfg = ExperimentConfig::new(StatKind::KsdRbf, 200, 50);
    cfg.seeds = 5;
    cfg.reps_per_seed = 100;
    let tc = run_tail_curve(&cfg)?;
    for k in LimitKind::ALL {
        if let Some(ks) = tc.ks(k) {
            eprintln!("KS {:<7} {ks:.4}", k.name());
        }
    }
    eprintln!("median-heuristic gamma {:.2}, rho_d {:.2}", tc.gamma.unwrap_or(f64::NAN), tc.moments.rho_d());
    tc.write_csv(std::io::stdout().lock())
}
