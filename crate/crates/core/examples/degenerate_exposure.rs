//! A fully spatial exposure (no independent variation) is reported as an
//! error by the estimators and the oracle, never as a number.
//!
//! `cargo run --example degenerate_exposure`

use spconf::basis::fourier_basis;
use spconf::dgp::{generate_dataset, ScenarioConfig};
use spconf::estimators::{EstimatorKind, EstimatorSpec, Smoothing};
use spconf::oracle::compute_estimands;

fn main() -> spconf::Result<()> {
    let config = ScenarioConfig {
        nu_sd: 0.0,
        e_sd: 0.0,
        ..ScenarioConfig::default()
    };
    match compute_estimands(&config) {
        Ok(t) => println!("unexpected targets {t:?}"),
        Err(e) => println!("oracle: {e}"),
    }
    let ds = generate_dataset(&config, 1)?;
    let basis = fourier_basis(&ds.obs.grid, 10)?;
    for kind in [
        EstimatorKind::Spatial,
        EstimatorKind::SpatialPlus,
        EstimatorKind::Gsem,
    ] {
        let spec = EstimatorSpec::new(kind, 10).with_smoothing(Smoothing::Fixed(0.0));
        match spec.run(&ds.obs, &basis) {
            Ok(r) => println!("{kind}: unexpected estimate {}", r.beta1_hat),
            Err(e) => println!("{kind} (exit code {}): {e}", e.exit_code()),
        }
    }
    Ok(())
}
