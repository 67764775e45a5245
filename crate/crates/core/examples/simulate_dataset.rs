//! Simulate a dataset from a JSON config and write it as CSV.
//!
//! `cargo run --example simulate_dataset -- [config.json] > data.csv`

use spconf::dgp::{exposure_spatial_fraction, generate_dataset, write_dataset_csv, ScenarioConfig};

fn main() -> spconf::Result<()> {
    let config = match std::env::args().nth(1) {
        Some(path) => ScenarioConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => ScenarioConfig::default(),
    };
    let ds = generate_dataset(&config, 11)?;
    eprintln!(
        "n = {}, spatial share of var(Z) = {:.3}, config hash {}",
        ds.obs.n(),
        exposure_spatial_fraction(&ds)?,
        config.hash()
    );
    write_dataset_csv(std::io::stdout().lock(), &ds, true)
}
