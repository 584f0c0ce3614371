//! Load a preset, inspect the resolved experiment, and print the canonical form.
//!
//! `cargo run --example config -- crates/core/examples/presets/fig1_left.json`

use hidim_ustat::config::{load_config_file, to_canonical_json};

fn main() -> hidim_ustat::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/presets/fig1_left.json").to_string());
    let file = load_config_file(std::path::Path::new(&path))?;
    let exp = file.to_experiment()?;
    println!(
        "{}: d = {}, n = {}, {} seeds x {} reps, base seed {}",
        exp.stat.name(),
        exp.d,
        exp.n,
        exp.seeds,
        exp.reps_per_seed,
        exp.base_seed
    );
    print!("{}", to_canonical_json(&file));
    Ok(())
}
