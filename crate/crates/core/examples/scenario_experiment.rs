//! Run both confounding scenarios and print the bias verdicts.
//!
//! `cargo run --release --example scenario_experiment -- [reps]`

use std::time::Instant;

use spconf::dgp::ScenarioConfig;
use spconf::mc::{scenario_experiment, MCPlan, ScenarioKind};

fn main() -> spconf::Result<()> {
    let reps = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(100);
    let base = MCPlan::new(ScenarioConfig::default(), Vec::new(), reps, 2024);
    for kind in ScenarioKind::ALL {
        let start = Instant::now();
        let report = scenario_experiment(kind, &base)?;
        let v = &report.verdict;
        println!(
            "{kind} ({reps} reps, {:.1}s)",
            start.elapsed().as_secs_f64()
        );
        println!(
            "  |bias| spatial {:.4}  spatial+ {:.4}  gsem {:.4}  (combined MC-SE {:.4})",
            v.abs_bias_spatial, v.abs_bias_spatial_plus, v.abs_bias_gsem, v.combined_mc_se
        );
        println!(
            "  expected winner {}: margin {:.2} SE, holds = {}; gsem within range = {}",
            v.expected_winner, v.margin_in_se, v.prediction_holds, v.gsem_within_range
        );
    }
    Ok(())
}
