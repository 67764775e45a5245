//! Population estimands for the default config and both scenarios.
//!
//! `cargo run --example population_targets`

use spconf::dgp::ScenarioConfig;
use spconf::mc::ScenarioKind;
use spconf::oracle::{
    compute_estimands, cond_achieved_closed_form, population_covariance, VARIABLES,
};

fn main() -> spconf::Result<()> {
    let base = ScenarioConfig::default();
    let cov = population_covariance(&base)?;
    println!("covariance over {VARIABLES:?}:{cov:.3}");
    for (name, cfg) in [
        ("default".to_string(), base.clone()),
        (
            ScenarioKind::StrongExposureWeakOutcome.to_string(),
            ScenarioKind::StrongExposureWeakOutcome.config(&base),
        ),
        (
            ScenarioKind::WeakExposureStrongOutcome.to_string(),
            ScenarioKind::WeakExposureStrongOutcome.config(&base),
        ),
    ] {
        let t = compute_estimands(&cfg)?;
        println!(
            "{name:<30} structural {:.4}  uncond {:.4}  cond_achieved {:.4} (closed form {:.4})  cond_S1 {:.4}",
            t.beta_structural,
            t.beta_uncond,
            t.beta_cond_achieved,
            cond_achieved_closed_form(&cfg)?,
            t.beta_cond_s1
        );
    }
    Ok(())
}
