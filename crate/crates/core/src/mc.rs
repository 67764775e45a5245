//! Monte Carlo harness and the scenario / AIC experiments.
//!
//! Replications run in parallel on the current rayon pool; results are
//! collected in replication order and aggregated serially, so summaries do not
//! depend on the number of worker threads.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{fourier_basis_with_order, BasisSet};
use crate::dgp::{generate_dataset, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimators::{spatial_lambda_path, EstimatorKind, EstimatorSpec};
use crate::fields::make_grid;
use crate::oracle::{compute_estimands, EstimandSet, Target};
use crate::pls::default_lambda_grid;
use crate::report::{ser_f64, ser_opt_f64};
use crate::seed::replication_seed;

/// Largest basis frequency used by default on an `m x m` grid.
pub fn default_max_freq(m: usize) -> usize {
    (m / 2).saturating_sub(1).clamp(1, 10)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCPlan {
    pub config: ScenarioConfig,
    pub estimators: Vec<EstimatorSpec>,
    pub reps: usize,
    pub master_seed: u64,
}

impl MCPlan {
    pub fn new(
        config: ScenarioConfig,
        estimators: Vec<EstimatorSpec>,
        reps: usize,
        master_seed: u64,
    ) -> Self {
        Self {
            config,
            estimators,
            reps,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.reps == 0 {
            return Err(Error::InvalidArgument(
                "replication count must be >= 1".into(),
            ));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidArgument("no estimators in plan".into()));
        }
        Ok(())
    }

    pub fn targets(&self) -> Result<EstimandSet> {
        compute_estimands(&self.config)
    }

    /// One basis per distinct `(max_freq, penalty_order)`.
    fn bases(&self) -> Result<BTreeMap<(usize, u32), BasisSet>> {
        let grid = make_grid(self.config.m)?;
        let mut out = BTreeMap::new();
        for spec in &self.estimators {
            if spec.kind == EstimatorKind::NonSpatialOls {
                continue;
            }
            if let std::collections::btree_map::Entry::Vacant(slot) =
                out.entry((spec.max_freq, spec.penalty_order))
            {
                slot.insert(fourier_basis_with_order(
                    &grid,
                    spec.max_freq,
                    spec.penalty_order,
                )?);
            }
        }
        Ok(out)
    }
}

/// What is kept from one successful fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Draw {
    pub beta1_hat: f64,
    pub ci95: (f64, f64),
    #[serde(serialize_with = "ser_f64")]
    pub aic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
    pub reps: usize,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryCell {
    /// Position of the estimator in the plan.
    pub index: usize,
    pub estimator: String,
    pub target: Target,
    #[serde(serialize_with = "ser_f64")]
    pub target_value: f64,
    #[serde(serialize_with = "ser_opt_f64")]
    pub mean_bias: Option<f64>,
    #[serde(serialize_with = "ser_opt_f64")]
    pub mc_se_of_bias: Option<f64>,
    /// Standard deviation with divisor `n_success`, so that
    /// `rmse^2 = mean_bias^2 + sd^2`. Absent with fewer than two successes.
    #[serde(serialize_with = "ser_opt_f64")]
    pub sd: Option<f64>,
    #[serde(serialize_with = "ser_opt_f64")]
    pub rmse: Option<f64>,
    #[serde(serialize_with = "ser_opt_f64")]
    pub coverage95: Option<f64>,
    #[serde(serialize_with = "ser_opt_f64")]
    pub mean_aic: Option<f64>,
    pub n_success: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MCSummary {
    pub provenance: Provenance,
    pub config: ScenarioConfig,
    pub estimators: Vec<EstimatorSpec>,
    pub targets: EstimandSet,
    pub cells: Vec<SummaryCell>,
    /// First error message per failing estimator (keyed by plan index).
    pub failures: BTreeMap<usize, String>,
    /// `draws[rep][estimator]`, `None` for failed fits.
    #[serde(skip)]
    pub draws: Vec<Vec<Option<Draw>>>,
}

impl MCSummary {
    pub fn cell(&self, index: usize, target: Target) -> Option<&SummaryCell> {
        self.cells
            .iter()
            .find(|c| c.index == index && c.target == target)
    }

    /// First cell for estimator `kind` against `target`.
    pub fn cell_for(&self, kind: EstimatorKind, target: Target) -> Option<&SummaryCell> {
        let index = self.estimators.iter().position(|s| s.kind == kind)?;
        self.cell(index, target)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// Long-format CSV, one row per estimator-target cell.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CELL_HEADER)?;
        for c in &self.cells {
            w.write_record(cell_row(c))?;
        }
        w.flush()?;
        Ok(())
    }
}

const CELL_HEADER: [&str; 13] = [
    "index",
    "estimator",
    "target",
    "target_value",
    "mean_bias",
    "mc_se_of_bias",
    "sd",
    "rmse",
    "coverage95",
    "mean_aic",
    "n_success",
    "n_failed",
    "reps",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn cell_row(c: &SummaryCell) -> Vec<String> {
    vec![
        c.index.to_string(),
        c.estimator.clone(),
        c.target.name().to_string(),
        c.target_value.to_string(),
        fmt_opt(c.mean_bias),
        fmt_opt(c.mc_se_of_bias),
        fmt_opt(c.sd),
        fmt_opt(c.rmse),
        fmt_opt(c.coverage95),
        fmt_opt(c.mean_aic),
        c.n_success.to_string(),
        c.n_failed.to_string(),
        (c.n_success + c.n_failed).to_string(),
    ]
}

/// Bias statistics of a set of estimates against `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasStats {
    pub mean_bias: f64,
    pub mc_se: Option<f64>,
    pub sd: Option<f64>,
    pub rmse: f64,
}

pub fn bias_stats(estimates: &[f64], target: f64) -> Option<BiasStats> {
    let k = estimates.len();
    if k == 0 {
        return None;
    }
    let kf = k as f64;
    let bias: Vec<f64> = estimates.iter().map(|b| b - target).collect();
    let mean = bias.iter().sum::<f64>() / kf;
    let ss = bias.iter().map(|b| (b - mean).powi(2)).sum::<f64>();
    let rmse = (bias.iter().map(|b| b * b).sum::<f64>() / kf).sqrt();
    let (sd, mc_se) = if k >= 2 {
        (
            Some((ss / kf).sqrt()),
            Some((ss / (kf - 1.0)).sqrt() / kf.sqrt()),
        )
    } else {
        (None, None)
    };
    Some(BiasStats {
        mean_bias: mean,
        mc_se,
        sd,
        rmse,
    })
}

fn run_replication(
    plan: &MCPlan,
    bases: &BTreeMap<(usize, u32), BasisSet>,
    empty: &BasisSet,
    rep: usize,
) -> Vec<std::result::Result<Draw, String>> {
    let seed = replication_seed(plan.master_seed, rep as u64);
    let ds = match generate_dataset(&plan.config, seed) {
        Ok(ds) => ds,
        Err(e) => return vec![Err(format!("data generation: {e}")); plan.estimators.len()],
    };
    plan.estimators
        .iter()
        .map(|spec| {
            let basis = bases
                .get(&(spec.max_freq, spec.penalty_order))
                .unwrap_or(empty);
            spec.run(&ds.obs, basis)
                .map(|r| Draw {
                    beta1_hat: r.beta1_hat,
                    ci95: r.ci95,
                    aic: r.aic,
                })
                .map_err(|e| e.to_string())
        })
        .collect()
}

/// Replicate, fit every estimator, and summarize against all four targets.
/// Individual fit failures are counted, never fatal.
pub fn run_mc(plan: &MCPlan) -> Result<MCSummary> {
    plan.validate()?;
    let targets = plan.targets()?;
    let bases = plan.bases()?;
    let empty = BasisSet::empty(plan.config.m * plan.config.m);
    let raw: Vec<Vec<std::result::Result<Draw, String>>> = (0..plan.reps)
        .into_par_iter()
        .map(|rep| run_replication(plan, &bases, &empty, rep))
        .collect();

    let mut failures = BTreeMap::new();
    let draws: Vec<Vec<Option<Draw>>> = raw
        .into_iter()
        .map(|row| {
            row.into_iter()
                .enumerate()
                .map(|(j, r)| match r {
                    Ok(d) => Some(d),
                    Err(msg) => {
                        failures.entry(j).or_insert(msg);
                        None
                    }
                })
                .collect()
        })
        .collect();

    let mut cells = Vec::new();
    for (j, spec) in plan.estimators.iter().enumerate() {
        let ok: Vec<Draw> = draws.iter().filter_map(|row| row[j]).collect();
        let betas: Vec<f64> = ok.iter().map(|d| d.beta1_hat).collect();
        let n_success = ok.len();
        let mean_aic =
            (n_success > 0).then(|| ok.iter().map(|d| d.aic).sum::<f64>() / n_success as f64);
        for target in Target::ALL {
            let t = targets.get(target);
            let stats = bias_stats(&betas, t);
            let coverage = (n_success > 0).then(|| {
                ok.iter().filter(|d| d.ci95.0 <= t && t <= d.ci95.1).count() as f64
                    / n_success as f64
            });
            cells.push(SummaryCell {
                index: j,
                estimator: spec.kind.name().to_string(),
                target,
                target_value: t,
                mean_bias: stats.map(|s| s.mean_bias),
                mc_se_of_bias: stats.and_then(|s| s.mc_se),
                sd: stats.and_then(|s| s.sd),
                rmse: stats.map(|s| s.rmse),
                coverage95: coverage,
                mean_aic,
                n_success,
                n_failed: plan.reps - n_success,
            });
        }
    }

    Ok(MCSummary {
        provenance: Provenance {
            config_hash: plan.config.hash(),
            master_seed: plan.master_seed,
            reps: plan.reps,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        config: plan.config.clone(),
        estimators: plan.estimators.clone(),
        targets,
        cells,
        failures,
        draws,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Spatial confounders drive the exposure, barely the outcome.
    StrongExposureWeakOutcome,
    /// Spatial confounders barely drive the exposure but strongly the outcome.
    WeakExposureStrongOutcome,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 2] = [
        ScenarioKind::StrongExposureWeakOutcome,
        ScenarioKind::WeakExposureStrongOutcome,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::StrongExposureWeakOutcome => "strong-exposure-weak-outcome",
            ScenarioKind::WeakExposureStrongOutcome => "weak-exposure-strong-outcome",
        }
    }

    /// `(a2, beta4)` for this scenario.
    pub fn loadings(self) -> (f64, f64) {
        match self {
            ScenarioKind::StrongExposureWeakOutcome => (2.0, 0.2),
            ScenarioKind::WeakExposureStrongOutcome => (0.2, 2.0),
        }
    }

    /// The estimator expected to be less biased.
    pub fn expected_winner(self) -> EstimatorKind {
        match self {
            ScenarioKind::StrongExposureWeakOutcome => EstimatorKind::SpatialPlus,
            ScenarioKind::WeakExposureStrongOutcome => EstimatorKind::Spatial,
        }
    }

    /// `base` with the scenario's high-frequency loadings.
    pub fn config(self, base: &ScenarioConfig) -> ScenarioConfig {
        let (a2, b4) = self.loadings();
        let mut c = base.clone();
        c.loadings[1] = a2;
        c.beta[4] = b4;
        c
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown scenario `{s}`; valid: strong-exposure-weak-outcome, weak-exposure-strong-outcome"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioVerdict {
    pub scenario: ScenarioKind,
    pub target: Target,
    #[serde(serialize_with = "ser_f64")]
    pub abs_bias_spatial: f64,
    #[serde(serialize_with = "ser_f64")]
    pub abs_bias_spatial_plus: f64,
    #[serde(serialize_with = "ser_f64")]
    pub abs_bias_gsem: f64,
    /// `sqrt(se_spatial^2 + se_spatial_plus^2)`.
    #[serde(serialize_with = "ser_f64")]
    pub combined_mc_se: f64,
    pub expected_winner: EstimatorKind,
    /// Margin of the expected winner in combined MC-SEs (positive when it
    /// is less biased).
    #[serde(serialize_with = "ser_f64")]
    pub margin_in_se: f64,
    /// Margin exceeds two combined MC-SEs.
    pub prediction_holds: bool,
    /// `|bias(gSEM)| <= max(|bias(Spatial)|, |bias(Spatial+)|)`; reported only.
    pub gsem_within_range: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub summary: MCSummary,
    pub verdict: ScenarioVerdict,
}

/// Default estimators for the scenario experiment: Spatial, Spatial+ and
/// gSEM with GCV smoothing.
pub fn scenario_estimators(m: usize) -> Vec<EstimatorSpec> {
    let f = default_max_freq(m);
    [
        EstimatorKind::Spatial,
        EstimatorKind::SpatialPlus,
        EstimatorKind::Gsem,
    ]
    .into_iter()
    .map(|k| EstimatorSpec::new(k, f))
    .collect()
}

fn abs_bias_and_se(summary: &MCSummary, kind: EstimatorKind, target: Target) -> Result<(f64, f64)> {
    let cell = summary
        .cell_for(kind, target)
        .ok_or_else(|| Error::InvalidArgument(format!("scenario plan lacks estimator `{kind}`")))?;
    match (cell.mean_bias, cell.mc_se_of_bias) {
        (Some(b), Some(se)) => Ok((b.abs(), se)),
        _ => Err(Error::InvalidArgument(format!(
            "estimator `{kind}` has fewer than two successful replications ({} failed)",
            cell.n_failed
        ))),
    }
}

/// Run Spatial, Spatial+ and gSEM under scenario `kind` built from
/// `base.config`, and compare their bias against `beta_cond_achieved`.
///
/// An empty `base.estimators` selects [`scenario_estimators`].
pub fn scenario_experiment(kind: ScenarioKind, base: &MCPlan) -> Result<ScenarioReport> {
    let config = kind.config(&base.config);
    let estimators = if base.estimators.is_empty() {
        scenario_estimators(config.m)
    } else {
        base.estimators.clone()
    };
    let plan = MCPlan::new(config, estimators, base.reps, base.master_seed);
    let summary = run_mc(&plan)?;
    let target = Target::CondAchieved;
    let (b_sp, se_sp) = abs_bias_and_se(&summary, EstimatorKind::Spatial, target)?;
    let (b_pl, se_pl) = abs_bias_and_se(&summary, EstimatorKind::SpatialPlus, target)?;
    let (b_gs, _) = abs_bias_and_se(&summary, EstimatorKind::Gsem, target)?;
    let combined = (se_sp * se_sp + se_pl * se_pl).sqrt();
    let winner = kind.expected_winner();
    let margin = match winner {
        EstimatorKind::SpatialPlus => b_sp - b_pl,
        _ => b_pl - b_sp,
    } / combined;
    let verdict = ScenarioVerdict {
        scenario: kind,
        target,
        abs_bias_spatial: b_sp,
        abs_bias_spatial_plus: b_pl,
        abs_bias_gsem: b_gs,
        combined_mc_se: combined,
        expected_winner: winner,
        margin_in_se: margin,
        prediction_holds: margin > 2.0,
        gsem_within_range: b_gs <= b_sp.max(b_pl),
    };
    Ok(ScenarioReport { summary, verdict })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AicBiasRow {
    #[serde(serialize_with = "ser_f64")]
    pub lambda: f64,
    #[serde(serialize_with = "ser_f64")]
    pub mean_aic: f64,
    #[serde(serialize_with = "ser_f64")]
    pub mean_bias: f64,
    #[serde(serialize_with = "ser_f64")]
    pub mc_se_of_bias: f64,
    #[serde(serialize_with = "ser_f64")]
    pub abs_bias: f64,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AicBiasTable {
    pub provenance: Provenance,
    pub target: Target,
    #[serde(serialize_with = "ser_f64")]
    pub target_value: f64,
    pub max_freq: usize,
    pub rows: Vec<AicBiasRow>,
    /// Some `lambda > 0` has lower mean AIC than `lambda = 0` while its
    /// `|mean bias|` is larger by more than two combined MC-SEs.
    pub flag: bool,
    /// The `lambda` values satisfying the flag condition.
    pub flagged_lambdas: Vec<f64>,
}

impl AicBiasTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "lambda",
            "mean_aic",
            "mean_bias",
            "mc_se_of_bias",
            "abs_bias",
            "n_failed",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.lambda.to_string(),
                r.mean_aic.to_string(),
                r.mean_bias.to_string(),
                r.mc_se_of_bias.to_string(),
                r.abs_bias.to_string(),
                r.n_failed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Spatial model at each fixed `lambda` (0 is added when absent) on the same
/// replicated datasets; bias is measured against `beta_cond_achieved`.
///
/// The basis is taken from the first spatial estimator in `base`, or
/// [`default_max_freq`] when there is none.
pub fn aic_bias_experiment(base: &MCPlan, lambda_grid: Option<&[f64]>) -> Result<AicBiasTable> {
    base.config.validate()?;
    if base.reps < 2 {
        return Err(Error::InvalidArgument(
            "the AIC experiment needs at least 2 replications".into(),
        ));
    }
    let mut grid: Vec<f64> = lambda_grid.map_or_else(default_lambda_grid, <[f64]>::to_vec);
    if grid.iter().any(|l| l.is_nan() || *l < 0.0) {
        return Err(Error::InvalidArgument("lambda values must be >= 0".into()));
    }
    if !grid.contains(&0.0) {
        grid.insert(0, 0.0);
    }
    let (max_freq, order) = base
        .estimators
        .iter()
        .find(|s| s.kind != EstimatorKind::NonSpatialOls)
        .map_or((default_max_freq(base.config.m), 1), |s| {
            (s.max_freq, s.penalty_order)
        });
    let basis = fourier_basis_with_order(&make_grid(base.config.m)?, max_freq, order)?;
    let target = Target::CondAchieved;
    let target_value = compute_estimands(&base.config)?.get(target);

    let raw: Vec<Vec<Option<(f64, f64)>>> = (0..base.reps)
        .into_par_iter()
        .map(|rep| {
            let seed = replication_seed(base.master_seed, rep as u64);
            let path = generate_dataset(&base.config, seed)
                .and_then(|ds| spatial_lambda_path(&ds.obs, &basis, &grid));
            match path {
                Ok(recs) => recs
                    .into_iter()
                    .map(|r| Some((r.beta1_hat, r.aic)))
                    .collect(),
                // a failing path (collinear at lambda = 0) fails every cell
                Err(_) => vec![None; grid.len()],
            }
        })
        .collect();

    let mut rows = Vec::with_capacity(grid.len());
    for (i, &lambda) in grid.iter().enumerate() {
        let ok: Vec<(f64, f64)> = raw.iter().filter_map(|r| r[i]).collect();
        let betas: Vec<f64> = ok.iter().map(|p| p.0).collect();
        let stats = bias_stats(&betas, target_value);
        let nan = f64::NAN;
        rows.push(AicBiasRow {
            lambda,
            mean_aic: if ok.is_empty() {
                nan
            } else {
                ok.iter().map(|p| p.1).sum::<f64>() / ok.len() as f64
            },
            mean_bias: stats.map_or(nan, |s| s.mean_bias),
            mc_se_of_bias: stats.and_then(|s| s.mc_se).unwrap_or(nan),
            abs_bias: stats.map_or(nan, |s| s.mean_bias.abs()),
            n_failed: base.reps - ok.len(),
        });
    }

    let zero = rows
        .iter()
        .find(|r| r.lambda == 0.0)
        .expect("zero is in the grid")
        .clone();
    let flagged_lambdas: Vec<f64> = rows
        .iter()
        .filter(|r| r.lambda > 0.0)
        .filter(|r| {
            let combined = (r.mc_se_of_bias.powi(2) + zero.mc_se_of_bias.powi(2)).sqrt();
            r.mean_aic < zero.mean_aic && r.abs_bias - zero.abs_bias > 2.0 * combined
        })
        .map(|r| r.lambda)
        .collect();

    Ok(AicBiasTable {
        provenance: Provenance {
            config_hash: base.config.hash(),
            master_seed: base.master_seed,
            reps: base.reps,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        target,
        target_value,
        max_freq,
        flag: !flagged_lambdas.is_empty(),
        flagged_lambdas,
        rows,
    })
}
