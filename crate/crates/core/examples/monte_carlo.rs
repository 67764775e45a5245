//! Monte Carlo summary of all six estimators, written as CSV to stdout.
//!
//! `cargo run --release --example monte_carlo -- [reps]`

use spconf::dgp::ScenarioConfig;
use spconf::estimators::{EstimatorKind, EstimatorSpec};
use spconf::mc::{default_max_freq, run_mc, MCPlan};

fn main() -> spconf::Result<()> {
    let reps = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(50);
    let config = ScenarioConfig::default();
    let f = default_max_freq(config.m);
    let estimators = EstimatorKind::ALL
        .iter()
        .map(|&k| EstimatorSpec::new(k, f))
        .collect();
    let summary = run_mc(&MCPlan::new(config, estimators, reps, 7))?;
    summary.write_csv(std::io::stdout().lock())
}
