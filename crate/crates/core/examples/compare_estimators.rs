//! Fit all six estimators to one simulated dataset and compare with the
//! population targets.
//!
//! `cargo run --example compare_estimators`

use spconf::basis::fourier_basis;
use spconf::dgp::{generate_dataset, ScenarioConfig};
use spconf::estimators::{EstimatorKind, EstimatorSpec};
use spconf::mc::default_max_freq;
use spconf::oracle::compute_estimands;

fn main() -> spconf::Result<()> {
    let config = ScenarioConfig::default();
    let targets = compute_estimands(&config)?;
    println!("{}", serde_json::to_string_pretty(&targets)?);

    let ds = generate_dataset(&config, 42)?;
    let basis = fourier_basis(&ds.obs.grid, default_max_freq(config.m))?;
    for kind in EstimatorKind::ALL {
        let rec = EstimatorSpec::new(kind, basis.max_freq()).run(&ds.obs, &basis)?;
        println!(
            "{:<22} {:>8.4}  [{:.4}, {:.4}]  lambdas {:?}",
            kind.name(),
            rec.beta1_hat,
            rec.ci95.0,
            rec.ci95.1,
            rec.lambdas
        );
    }
    Ok(())
}
