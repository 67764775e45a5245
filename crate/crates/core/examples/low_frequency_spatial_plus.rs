//! Spatial+ with the basis cut to low frequencies targets the coefficient
//! conditional on `C` and `S1` only.
//!
//! `cargo run --release --example low_frequency_spatial_plus -- [reps]`

use spconf::dgp::ScenarioConfig;
use spconf::estimators::{EstimatorKind, EstimatorSpec, Smoothing};
use spconf::mc::{run_mc, MCPlan};
use spconf::oracle::Target;

fn main() -> spconf::Result<()> {
    let reps = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(100);
    let config = ScenarioConfig {
        sigma: 0.0,
        ..ScenarioConfig::default()
    };
    let estimators = vec![
        EstimatorSpec::new(EstimatorKind::SpatialPlusLowFreq, 10).with_cutoff(2),
        EstimatorSpec::new(EstimatorKind::SpatialPlus, 10).with_smoothing(Smoothing::Fixed(0.0)),
    ];
    let s = run_mc(&MCPlan::new(config, estimators, reps, 5))?;
    for (i, target) in [(0, Target::CondS1), (1, Target::CondAchieved)] {
        let c = s.cell(i, target).unwrap();
        println!(
            "{:<22} vs {:<14} target {:.4}  bias {:+.4} (MC-SE {:.4})",
            c.estimator,
            target.name(),
            c.target_value,
            c.mean_bias.unwrap(),
            c.mc_se_of_bias.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
