use spconf::dgp::ScenarioConfig;
use spconf::estimators::{EstimatorKind, EstimatorSpec, Smoothing};
use spconf::fields::SpectralSpec;
use spconf::mc::{run_mc, MCPlan};
use spconf::oracle::Target;

fn neutral_config() -> ScenarioConfig {
    ScenarioConfig {
        m: 16,
        loadings: [0.0, 0.0, 0.5],
        beta: [0.3, 1.5, 1.0, 0.0, 0.0, 0.0],
        spec_s2: SpectralSpec::new(5, 7, 0.0, 1.0),
        ..Default::default()
    }
}

fn neutral_plan(m: usize, specs: Vec<EstimatorSpec>) -> MCPlan {
    MCPlan::new(
        ScenarioConfig {
            m,
            ..neutral_config()
        },
        specs,
        500,
        21,
    )
}

#[test]
fn estimators_are_unbiased_without_confounding() {
    // GCV-smoothed Spatial+ is excluded here; see the next test
    let mut estimators: Vec<EstimatorSpec> = EstimatorKind::ALL
        .iter()
        .filter(|&&k| k != EstimatorKind::SpatialPlus)
        .map(|&k| EstimatorSpec::new(k, 5))
        .collect();
    estimators.push(
        EstimatorSpec::new(EstimatorKind::SpatialPlus, 5).with_smoothing(Smoothing::Fixed(0.0)),
    );
    let s = run_mc(&neutral_plan(16, estimators)).unwrap();
    for c in s.cells.iter().filter(|c| c.target == Target::Structural) {
        assert_eq!(c.n_failed, 0, "{}", c.estimator);
        let (b, se) = (c.mean_bias.unwrap(), c.mc_se_of_bias.unwrap());
        assert!(b.abs() < 3.0 * se, "{}: bias {b} mc-se {se}", c.estimator);
    }
}

/// With a shrinking stage-1 smoother `S`, stage 2 only partly absorbs
/// `beta1 * S Z`, which is positively correlated with `(I - S) Z`; the
/// leftover bias is positive and vanishes as `n` grows with `p` fixed.
#[test]
fn gcv_spatial_plus_gap_is_positive_and_shrinks_with_n() {
    let bias = |m: usize| {
        let spec = EstimatorSpec::new(EstimatorKind::SpatialPlus, 5);
        let s = run_mc(&neutral_plan(m, vec![spec])).unwrap();
        let c = s.cell(0, Target::Structural).unwrap().clone();
        (c.mean_bias.unwrap(), c.mc_se_of_bias.unwrap())
    };
    let (b16, se16) = bias(16);
    let (b32, se32) = bias(32);
    assert!(b16 > 3.0 * se16, "m=16: {b16} ({se16})");
    assert!(b32 > 0.0);
    assert!(
        b16 - b32 > 2.0 * (se16 * se16 + se32 * se32).sqrt(),
        "{b16} vs {b32}"
    );
}

#[test]
fn ols_coverage_is_nominal_without_confounding() {
    let plan = MCPlan::new(
        neutral_config(),
        vec![EstimatorSpec::new(EstimatorKind::NonSpatialOls, 5)],
        500,
        4,
    );
    let s = run_mc(&plan).unwrap();
    let c = s.cell(0, Target::Structural).unwrap();
    // binomial sd at p = 0.95, R = 500 is about 0.01
    assert!(
        (c.coverage95.unwrap() - 0.95).abs() < 0.04,
        "{:?}",
        c.coverage95
    );
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let estimators = [
        EstimatorKind::Spatial,
        EstimatorKind::SpatialPlus,
        EstimatorKind::Gsem,
    ]
    .iter()
    .map(|&k| EstimatorSpec::new(k, 5))
    .collect();
    let mut cfg = neutral_config();
    cfg.loadings = [1.0, 1.0, 0.5];
    cfg.beta[4] = 1.0;
    let plan = MCPlan::new(cfg, estimators, 24, 8);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_mc(&plan).unwrap())
    };
    let a = run(1);
    for threads in [2, 5] {
        let b = run(threads);
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }
}

/// With the basis cut below the `S2` band, `S2` is exactly orthogonal to the
/// retained columns while `E` and `nu` lose a share `k/n` of their sample
/// variance to the `k` projected columns. The Monte Carlo mean then matches
/// the population coefficient computed with those shrunken variances.
#[test]
fn low_frequency_spatial_plus_matches_projected_variance_prediction() {
    let cfg = ScenarioConfig::default();
    let spec = EstimatorSpec::new(EstimatorKind::SpatialPlusLowFreq, 10).with_cutoff(2);
    let s = run_mc(&MCPlan::new(cfg.clone(), vec![spec], 300, 77)).unwrap();
    let c = s.cell(0, Target::CondS1).unwrap();

    // cutoff-2 block has (2*2+1)^2 - 1 columns, plus intercept and C
    let n = (cfg.m * cfg.m) as f64;
    let keep = 1.0 - (24.0 + 2.0) / n;
    let a2 = cfg.loadings[1];
    let spatial = cfg.spec_s2.variance + cfg.e_sd.powi(2) * keep;
    let predicted =
        cfg.beta[1] + cfg.beta[4] * a2 * spatial / (a2 * a2 * spatial + cfg.nu_sd.powi(2) * keep);

    let mean = c.target_value + c.mean_bias.unwrap();
    let se = c.mc_se_of_bias.unwrap();
    assert!(
        (mean - predicted).abs() < 3.0 * se,
        "mean {mean} predicted {predicted} se {se}"
    );
    // and the population target is measurably off at this n
    assert!(predicted - c.target_value > 2.0 * se);
}
