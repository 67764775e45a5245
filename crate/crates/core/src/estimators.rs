//! The six exposure-coefficient estimators.
//!
//! Every estimator receives only [`Observations`] (`Z`, `C`, `Y` on a grid)
//! and a spatial basis; latent fields are never read here.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::basis::{restrict_low_frequency, BasisSet};
use crate::dgp::Observations;
use crate::error::{Error, Result};
use crate::pls::{default_lambda_grid, project_out, FitResult, FixedDesign, PlsProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    #[serde(rename = "nonspatial")]
    NonSpatialOls,
    Rsr,
    Spatial,
    SpatialPlus,
    Gsem,
    #[serde(rename = "spatial-plus-lowfreq")]
    SpatialPlusLowFreq,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::NonSpatialOls,
        EstimatorKind::Rsr,
        EstimatorKind::Spatial,
        EstimatorKind::SpatialPlus,
        EstimatorKind::Gsem,
        EstimatorKind::SpatialPlusLowFreq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::NonSpatialOls => "nonspatial",
            EstimatorKind::Rsr => "rsr",
            EstimatorKind::Spatial => "spatial",
            EstimatorKind::SpatialPlus => "spatial-plus",
            EstimatorKind::Gsem => "gsem",
            EstimatorKind::SpatialPlusLowFreq => "spatial-plus-lowfreq",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = EstimatorKind::ALL.iter().map(|k| k.name()).collect();
                Error::InvalidArgument(format!(
                    "unknown estimator `{s}`; valid names: {}",
                    names.join(", ")
                ))
            })
    }
}

/// How the smoothing parameter of a penalized stage is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothing {
    /// Minimize GCV over the grid.
    Gcv(Vec<f64>),
    /// Use this value (`f64::INFINITY` removes the basis).
    Fixed(f64),
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::Gcv(default_lambda_grid())
    }
}

impl Smoothing {
    fn fit(&self, y: &[f64], fixed: &FixedDesign, b: &BasisSet) -> Result<FitResult> {
        let problem = PlsProblem::new(y, fixed, b)?;
        let s = match self {
            Smoothing::Gcv(grid) => problem.select_gcv(grid)?,
            Smoothing::Fixed(lambda) => problem.solve(*lambda)?,
        };
        Ok(problem.finish(s))
    }
}

/// Options shared by the two-stage estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOptions {
    pub smoothing: Smoothing,
    /// Include `C` in the Spatial+ exposure model.
    pub stage1_include_c: bool,
}

impl Default for StageOptions {
    fn default() -> Self {
        Self {
            smoothing: Smoothing::default(),
            stage1_include_c: true,
        }
    }
}

impl StageOptions {
    pub fn fixed(lambda: f64) -> Self {
        Self {
            smoothing: Smoothing::Fixed(lambda),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub kind: EstimatorKind,
    pub beta1_hat: f64,
    #[serde(serialize_with = "crate::report::ser_f64")]
    pub se: f64,
    pub ci95: (f64, f64),
    #[serde(serialize_with = "crate::report::ser_f64_map")]
    pub lambdas: BTreeMap<String, f64>,
    #[serde(serialize_with = "crate::report::ser_f64_map")]
    pub edf: BTreeMap<String, f64>,
    #[serde(serialize_with = "crate::report::ser_f64")]
    pub aic: f64,
    #[serde(serialize_with = "crate::report::ser_f64_map")]
    pub diagnostics: BTreeMap<String, f64>,
}

impl EstimateRecord {
    fn new(kind: EstimatorKind, beta1_hat: f64, se: f64, aic: f64) -> Self {
        Self {
            kind,
            beta1_hat,
            se,
            ci95: (beta1_hat - 1.96 * se, beta1_hat + 1.96 * se),
            lambdas: BTreeMap::new(),
            edf: BTreeMap::new(),
            aic,
            diagnostics: BTreeMap::new(),
        }
    }

    fn stage(mut self, name: &str, fit: &FitResult) -> Self {
        self.lambdas.insert(name.to_string(), fit.lambda);
        self.edf.insert(name.to_string(), fit.edf);
        self.diagnostics.insert(format!("{name}_rcond"), fit.rcond);
        self
    }

    pub fn covers(&self, target: f64) -> bool {
        self.ci95.0 <= target && target <= self.ci95.1
    }
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

fn check_size(obs: &Observations) -> Result<()> {
    if obs.n() <= 3 {
        return Err(Error::InvalidArgument(format!(
            "need n > 3 observations, got {}",
            obs.n()
        )));
    }
    Ok(())
}

fn check_basis(obs: &Observations, b: &BasisSet) -> Result<()> {
    if b.n() != obs.n() {
        return Err(Error::Dimension(format!(
            "basis has {} rows, data has {}",
            b.n(),
            obs.n()
        )));
    }
    Ok(())
}

fn outcome_design(obs: &Observations) -> Result<FixedDesign> {
    FixedDesign::with_intercept(obs.n(), &[("Z", &obs.z), ("C", &obs.c)])
}

fn coef_and_se(fit: &FitResult, name: &str) -> (f64, f64) {
    (fit.coef(name).unwrap(), fit.se(name).unwrap())
}

/// OLS of `Y` on `(1, Z, C)`.
pub fn fit_nonspatial(obs: &Observations) -> Result<EstimateRecord> {
    check_size(obs)?;
    let fixed = outcome_design(obs)?;
    let empty = BasisSet::empty(obs.n());
    let fit = Smoothing::Fixed(0.0).fit(&obs.y, &fixed, &empty)?;
    let (b, se) = coef_and_se(&fit, "Z");
    Ok(EstimateRecord::new(EstimatorKind::NonSpatialOls, b, se, fit.aic).stage("outcome", &fit))
}

/// Restricted spatial regression: OLS of `Y` on `(1, Z, C, B_perp)` with the
/// basis projected orthogonal to `(1, Z, C)`.
pub fn fit_rsr(obs: &Observations, b: &BasisSet) -> Result<EstimateRecord> {
    check_size(obs)?;
    check_basis(obs, b)?;
    let fixed = outcome_design(obs)?;
    let restricted = if b.p() == 0 {
        BasisSet::empty(obs.n())
    } else {
        let perp = project_out(b.columns(), fixed.matrix())?;
        BasisSet::from_columns(perp, b.freq().to_vec(), b.penalty().to_vec())?
    };
    let fit = Smoothing::Fixed(0.0).fit(&obs.y, &fixed, &restricted)?;
    let (beta, se) = coef_and_se(&fit, "Z");
    Ok(EstimateRecord::new(EstimatorKind::Rsr, beta, se, fit.aic).stage("outcome", &fit))
}

/// Penalized basis directly in the outcome model.
pub fn fit_spatial(
    obs: &Observations,
    b: &BasisSet,
    smoothing: &Smoothing,
) -> Result<EstimateRecord> {
    check_size(obs)?;
    check_basis(obs, b)?;
    let fixed = outcome_design(obs)?;
    let fit = smoothing.fit(&obs.y, &fixed, b)?;
    let (beta, se) = coef_and_se(&fit, "Z");
    Ok(EstimateRecord::new(EstimatorKind::Spatial, beta, se, fit.aic).stage("outcome", &fit))
}

/// Spatial fits at each fixed `lambda` in `grid`, sharing one factorization
/// of the data.
pub fn spatial_lambda_path(
    obs: &Observations,
    b: &BasisSet,
    grid: &[f64],
) -> Result<Vec<EstimateRecord>> {
    check_size(obs)?;
    check_basis(obs, b)?;
    let fixed = outcome_design(obs)?;
    let problem = PlsProblem::new(&obs.y, &fixed, b)?;
    grid.iter()
        .map(|&lambda| {
            let fit = problem.finish(problem.solve(lambda)?);
            let (beta, se) = coef_and_se(&fit, "Z");
            Ok(
                EstimateRecord::new(EstimatorKind::Spatial, beta, se, fit.aic)
                    .stage("outcome", &fit),
            )
        })
        .collect()
}

/// Stage-1 exposure residuals of Spatial+; errors when they vanish.
fn exposure_residuals(
    obs: &Observations,
    b: &BasisSet,
    opts: &StageOptions,
) -> Result<(Vec<f64>, FitResult)> {
    let vz = variance(&obs.z);
    if vz <= 0.0 {
        return Err(Error::DegenerateExposure);
    }
    let fixed = if opts.stage1_include_c {
        FixedDesign::with_intercept(obs.n(), &[("C", &obs.c)])?
    } else {
        FixedDesign::with_intercept(obs.n(), &[])?
    };
    let fit = opts.smoothing.fit(&obs.z, &fixed, b)?;
    let r = fit.residuals.clone();
    let vr = variance(&r);
    if vr < 1e-12 * vz {
        return Err(Error::DegenerateResidual {
            residual_var: vr,
            exposure_var: vz,
        });
    }
    Ok((r, fit))
}

fn spatial_plus_with(
    kind: EstimatorKind,
    obs: &Observations,
    b: &BasisSet,
    opts: &StageOptions,
) -> Result<EstimateRecord> {
    check_size(obs)?;
    check_basis(obs, b)?;
    let (r_z, stage1) = exposure_residuals(obs, b, opts)?;
    let fixed = FixedDesign::with_intercept(obs.n(), &[("r_Z", &r_z), ("C", &obs.c)])?;
    let stage2 = opts.smoothing.fit(&obs.y, &fixed, b)?;
    let (beta, se) = coef_and_se(&stage2, "r_Z");
    let mut rec = EstimateRecord::new(kind, beta, se, stage2.aic)
        .stage("exposure", &stage1)
        .stage("outcome", &stage2);
    rec.diagnostics.insert(
        "exposure_residual_share".into(),
        variance(&r_z) / variance(&obs.z),
    );
    rec.diagnostics.insert("basis_columns".into(), b.p() as f64);
    Ok(rec)
}

/// Spatial+: residualize `Z` on the basis, then use the residuals as the
/// exposure in a spatially adjusted outcome model. The standard error comes
/// from stage 2 alone.
pub fn fit_spatial_plus(
    obs: &Observations,
    b: &BasisSet,
    opts: &StageOptions,
) -> Result<EstimateRecord> {
    spatial_plus_with(EstimatorKind::SpatialPlus, obs, b, opts)
}

/// Spatial+ restricted to basis columns with frequency label `<= cutoff`.
/// Unpenalized by default (pass `StageOptions::fixed(0.0)`).
pub fn fit_spatial_plus_lowfreq(
    obs: &Observations,
    b: &BasisSet,
    cutoff: usize,
    opts: &StageOptions,
) -> Result<EstimateRecord> {
    let low = restrict_low_frequency(b, cutoff)?;
    let mut rec = spatial_plus_with(EstimatorKind::SpatialPlusLowFreq, obs, &low, opts)?;
    rec.diagnostics.insert("cutoff".into(), cutoff as f64);
    Ok(rec)
}

/// gSEM: residualize `Y`, `Z` and `C` on `(1 + basis)` with independent
/// smoothing, then OLS of `r_Y` on `(1, r_Z, r_C)`.
///
/// The reported AIC charges the outcome smoother's EDF plus the two
/// residual-regression slopes.
pub fn fit_gsem(obs: &Observations, b: &BasisSet, smoothing: &Smoothing) -> Result<EstimateRecord> {
    check_size(obs)?;
    check_basis(obs, b)?;
    let n = obs.n();
    let vz = variance(&obs.z);
    if vz <= 0.0 {
        return Err(Error::DegenerateExposure);
    }
    let intercept = FixedDesign::with_intercept(n, &[])?;
    let fy = smoothing.fit(&obs.y, &intercept, b)?;
    let fz = smoothing.fit(&obs.z, &intercept, b)?;
    let fc = smoothing.fit(&obs.c, &intercept, b)?;
    let vr = variance(&fz.residuals);
    if vr < 1e-12 * vz {
        return Err(Error::DegenerateResidual {
            residual_var: vr,
            exposure_var: vz,
        });
    }
    let fixed = FixedDesign::with_intercept(n, &[("r_Z", &fz.residuals), ("r_C", &fc.residuals)])?;
    let fit = Smoothing::Fixed(0.0).fit(&fy.residuals, &fixed, &BasisSet::empty(n))?;
    let (beta, se) = coef_and_se(&fit, "r_Z");
    let aic = n as f64 * (fit.rss / n as f64).ln() + 2.0 * (fy.edf + 2.0);
    let mut rec = EstimateRecord::new(EstimatorKind::Gsem, beta, se, aic)
        .stage("outcome", &fy)
        .stage("exposure", &fz)
        .stage("covariate", &fc)
        .stage("residual", &fit);
    rec.diagnostics
        .insert("exposure_residual_share".into(), vr / vz);
    Ok(rec)
}

/// One estimator together with its basis and smoothing settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    /// Largest basis frequency; ignored by the non-spatial estimator.
    pub max_freq: usize,
    /// Roughness penalty order `q` (weights `f^(2q)`).
    #[serde(default = "one")]
    pub penalty_order: u32,
    pub options: StageOptions,
    /// Frequency cutoff for the low-frequency Spatial+ variant.
    #[serde(default)]
    pub cutoff: Option<usize>,
}

fn one() -> u32 {
    1
}

impl EstimatorSpec {
    /// Default settings for `kind`: GCV smoothing, except the low-frequency
    /// variant which is unpenalized with cutoff 2.
    pub fn new(kind: EstimatorKind, max_freq: usize) -> Self {
        let (options, cutoff) = match kind {
            EstimatorKind::SpatialPlusLowFreq => (StageOptions::fixed(0.0), Some(2)),
            _ => (StageOptions::default(), None),
        };
        Self {
            kind,
            max_freq,
            penalty_order: 1,
            options,
            cutoff,
        }
    }

    pub fn with_smoothing(mut self, smoothing: Smoothing) -> Self {
        self.options.smoothing = smoothing;
        self
    }

    pub fn with_cutoff(mut self, cutoff: usize) -> Self {
        self.cutoff = Some(cutoff);
        self
    }

    /// Run on `obs` with a basis already built for `(max_freq, penalty_order)`.
    pub fn run(&self, obs: &Observations, basis: &BasisSet) -> Result<EstimateRecord> {
        match self.kind {
            EstimatorKind::NonSpatialOls => fit_nonspatial(obs),
            EstimatorKind::Rsr => fit_rsr(obs, basis),
            EstimatorKind::Spatial => fit_spatial(obs, basis, &self.options.smoothing),
            EstimatorKind::SpatialPlus => fit_spatial_plus(obs, basis, &self.options),
            EstimatorKind::Gsem => fit_gsem(obs, basis, &self.options.smoothing),
            EstimatorKind::SpatialPlusLowFreq => {
                let cutoff = self.cutoff.ok_or_else(|| {
                    Error::InvalidArgument("low-frequency Spatial+ needs a cutoff".into())
                })?;
                fit_spatial_plus_lowfreq(obs, basis, cutoff, &self.options)
            }
        }
    }
}
