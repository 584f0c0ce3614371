//! Third-moment ratios M_3 / sigma across dimensions.

use hidim_ustat::experiments::{run_moment_ratio_sweep, write_ratios_csv, ExperimentConfig, StatKind};

fn main() -> hidim_ustat::Result<()> {
    let cfg = ExperimentConfig::new(StatKind::MmdRbf, 1, 50);
    let rows = run_moment_ratio_sweep(&cfg, &[1, 10, 100], 1000, 2)?;
    write_ratios_csv(&rows, std::io::stdout().lock())
}
