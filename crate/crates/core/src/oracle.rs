//! Population estimands as linear-projection coefficients.
//!
//! All sources (`S1`, `S2`, `C`, `E`, `U`, `nu`, `eps`) are mutually
//! independent with variances taken from the config, so the covariance of the
//! observed and latent variables follows from the two structural equations by
//! linearity. Each estimand is the `Z` coefficient in the population least
//! squares projection of `Y` on a conditioning set.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dgp::ScenarioConfig;
use crate::error::{Error, Result};

/// Variable order of [`population_covariance`].
pub const VARIABLES: [&str; 7] = ["Y", "Z", "C", "S1", "S2", "E", "U"];

const Y: usize = 0;
const Z: usize = 1;
const C: usize = 2;
const S1: usize = 3;
const S2: usize = 4;

/// Covariance matrix over `(Y, Z, C, S1, S2, E, U)`.
pub fn population_covariance(config: &ScenarioConfig) -> Result<DMatrix<f64>> {
    config.validate()?;
    let [a1, a2, a3] = config.loadings;
    let [_, b1, b2, b3, b4, b5] = config.beta;
    // sources: S1, S2, C, E, U, nu, eps
    let var = DVector::from_vec(vec![
        config.spec_s1.variance,
        config.spec_s2.variance,
        config.spec_c.variance(),
        config.e_sd.powi(2),
        config.u_sd.powi(2),
        config.nu_sd.powi(2),
        config.sigma.powi(2),
    ]);
    let z_row = [a1, a2, a3, a2, 0.0, 1.0, 0.0];
    let y_row: Vec<f64> = z_row
        .iter()
        .zip([b3, b4, b2, b4, b5, 0.0, 1.0])
        .map(|(z, direct)| b1 * z + direct)
        .collect();
    #[rustfmt::skip]
    let load = DMatrix::from_row_slice(7, 7, &[
        y_row[0], y_row[1], y_row[2], y_row[3], y_row[4], y_row[5], y_row[6],
        z_row[0], z_row[1], z_row[2], z_row[3], z_row[4], z_row[5], z_row[6],
        0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0,
        1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0,
    ]);
    let cov = &load * DMatrix::from_diagonal(&var) * load.transpose();
    // exact symmetry
    Ok((&cov + cov.transpose()) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    #[serde(rename = "structural")]
    Structural,
    #[serde(rename = "uncond")]
    Unconditional,
    #[serde(rename = "cond_achieved")]
    CondAchieved,
    #[serde(rename = "cond_S1")]
    CondS1,
}

impl Target {
    pub const ALL: [Target; 4] = [
        Target::Structural,
        Target::Unconditional,
        Target::CondAchieved,
        Target::CondS1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Target::Structural => "structural",
            Target::Unconditional => "uncond",
            Target::CondAchieved => "cond_achieved",
            Target::CondS1 => "cond_S1",
        }
    }

    /// Conditioning variables besides `Z` (indices into [`VARIABLES`]).
    fn conditioners(self) -> &'static [usize] {
        match self {
            Target::Structural => &[],
            Target::Unconditional => &[C],
            Target::CondAchieved => &[C, S1, S2],
            Target::CondS1 => &[C, S1],
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimandSet {
    pub beta_structural: f64,
    pub beta_uncond: f64,
    pub beta_cond_achieved: f64,
    #[serde(rename = "beta_cond_S1")]
    pub beta_cond_s1: f64,
}

impl EstimandSet {
    pub fn get(&self, t: Target) -> f64 {
        match t {
            Target::Structural => self.beta_structural,
            Target::Unconditional => self.beta_uncond,
            Target::CondAchieved => self.beta_cond_achieved,
            Target::CondS1 => self.beta_cond_s1,
        }
    }
}

/// Relative threshold on `var(Z | conditioners) / var(Z)`.
const IDENTIFIABLE: f64 = 1e-12;

/// `Z` coefficient of the projection of `Y` on `(Z, conditioners)`.
fn projection_coefficient(cov: &DMatrix<f64>, conditioners: &[usize], label: &str) -> Result<f64> {
    let vz = cov[(Z, Z)];
    if vz <= 0.0 {
        return Err(Error::EstimandUndefined(format!("{label}: var(Z) = 0")));
    }
    // zero-variance conditioners are constants and absorbed by the intercept
    let live: Vec<usize> = conditioners
        .iter()
        .copied()
        .filter(|&i| cov[(i, i)] > 0.0)
        .collect();
    let (z_given, y_given) = if live.is_empty() {
        (vz, cov[(Y, Z)])
    } else {
        let k = live.len();
        let soo = DMatrix::from_fn(k, k, |a, b| cov[(live[a], live[b])]);
        let soz = DVector::from_fn(k, |a, _| cov[(live[a], Z)]);
        let soy = DVector::from_fn(k, |a, _| cov[(live[a], Y)]);
        let ch = soo.cholesky().ok_or_else(|| {
            Error::EstimandUndefined(format!("{label}: conditioning covariance is singular"))
        })?;
        let wz = ch.solve(&soz);
        (vz - soz.dot(&wz), cov[(Y, Z)] - soy.dot(&wz))
    };
    if z_given <= IDENTIFIABLE * vz {
        return Err(Error::EstimandUndefined(format!(
            "{label}: Z has no variation left after conditioning (var(Z | conditioners) = {z_given:.3e}); the exposure is collinear with the conditioning set"
        )));
    }
    Ok(y_given / z_given)
}

pub fn compute_estimand(config: &ScenarioConfig, target: Target) -> Result<f64> {
    if target == Target::Structural {
        config.validate()?;
        return Ok(config.beta[1]);
    }
    let cov = population_covariance(config)?;
    projection_coefficient(&cov, target.conditioners(), target.name())
}

/// All four estimands; fails if any conditional target is undefined.
pub fn compute_estimands(config: &ScenarioConfig) -> Result<EstimandSet> {
    Ok(EstimandSet {
        beta_structural: compute_estimand(config, Target::Structural)?,
        beta_uncond: compute_estimand(config, Target::Unconditional)?,
        beta_cond_achieved: compute_estimand(config, Target::CondAchieved)?,
        beta_cond_s1: compute_estimand(config, Target::CondS1)?,
    })
}

/// `b1 + b4 a2 e^2 / (a2^2 e^2 + nu^2)`: the achieved spatially-conditional
/// coefficient in explicit form.
pub fn cond_achieved_closed_form(config: &ScenarioConfig) -> Result<f64> {
    let a2 = config.loadings[1];
    let e2 = config.e_sd.powi(2);
    let denom = a2 * a2 * e2 + config.nu_sd.powi(2);
    if denom <= 0.0 {
        return Err(Error::EstimandUndefined(
            "cond_achieved: a2^2 e_sd^2 + nu_sd^2 = 0".into(),
        ));
    }
    Ok(config.beta[1] + config.beta[4] * a2 * e2 / denom)
}
