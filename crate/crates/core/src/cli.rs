//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 I/O error, 4 statistical
//! degeneracy (collinearity, undefined estimand).

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::basis::fourier_basis_with_order;
use crate::dgp::{generate_dataset, read_observations_csv, write_dataset_csv, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, EstimatorSpec, Smoothing};
use crate::mc::{
    aic_bias_experiment, default_max_freq, run_mc, scenario_experiment, MCPlan, ScenarioKind,
};
use crate::oracle::compute_estimands;

#[derive(Debug, Parser)]
#[command(
    name = "spconf",
    version,
    about = "Spatial confounding simulation and estimation laboratory"
)]
pub struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one dataset as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the latent columns S1,S2,E,U,nu,eps.
        #[arg(long)]
        latent: bool,
        #[command(flatten)]
        manifest: ManifestArgs,
    },
    /// Fit one estimator to a CSV dataset and print the estimate as JSON.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// nonspatial | rsr | spatial | spatial-plus | gsem | spatial-plus-lowfreq
        #[arg(long)]
        estimator: String,
        #[command(flatten)]
        basis: BasisArgs,
    },
    /// Monte Carlo summary of several estimators.
    Mc {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated estimator names (default: all six).
        #[arg(long, value_delimiter = ',')]
        estimators: Option<Vec<String>>,
        #[arg(long, default_value_t = 500)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        basis: BasisArgs,
        #[command(flatten)]
        outputs: OutputArgs,
    },
    /// Print the population estimands of a config as JSON.
    Targets {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a confounding scenario experiment.
    Scenario {
        /// Base config (default: built-in defaults).
        #[arg(long)]
        config: Option<PathBuf>,
        /// strong-exposure-weak-outcome | weak-exposure-strong-outcome | both
        #[arg(long, default_value = "both")]
        kind: String,
        #[arg(long, default_value_t = 500)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        basis: BasisArgs,
        #[command(flatten)]
        outputs: OutputArgs,
    },
    /// Spatial model at fixed smoothing levels: mean AIC against bias.
    AicBias {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated lambda values (default: 0 and 41 log-spaced values).
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        #[arg(long, default_value_t = 300)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        max_freq: Option<usize>,
        #[command(flatten)]
        outputs: OutputArgs,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Debug, Args)]
struct BasisArgs {
    /// Largest basis frequency (default: min(m/2 - 1, 10)).
    #[arg(long)]
    max_freq: Option<usize>,
    #[arg(long, default_value_t = 1)]
    penalty_order: u32,
    /// Fixed smoothing parameter (`inf` drops the basis); GCV when absent.
    #[arg(long)]
    lambda: Option<f64>,
    /// Frequency cutoff for spatial-plus-lowfreq.
    #[arg(long)]
    cutoff: Option<usize>,
    /// Leave C out of the Spatial+ exposure model.
    #[arg(long)]
    exclude_c_stage1: bool,
}

impl BasisArgs {
    fn spec(&self, kind: EstimatorKind, m: usize) -> EstimatorSpec {
        let mut spec =
            EstimatorSpec::new(kind, self.max_freq.unwrap_or_else(|| default_max_freq(m)));
        spec.penalty_order = self.penalty_order;
        if let Some(l) = self.lambda {
            spec = spec.with_smoothing(Smoothing::Fixed(l));
        }
        if let Some(c) = self.cutoff {
            spec = spec.with_cutoff(c);
        }
        spec.options.stage1_include_c = !self.exclude_c_stage1;
        spec
    }
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// CSV table path (stdout when neither --out nor --json is given).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON path with full provenance.
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    manifest: ManifestArgs,
}

#[derive(Debug, Args)]
struct ManifestArgs {
    /// Manifest path (default: first output path + `.manifest.json`).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

/// Record of one invocation, sufficient to reproduce its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Arguments after the program name.
    pub args: Vec<String>,
    pub config_path: Option<String>,
    pub outputs: Vec<String>,
    pub master_seed: Option<u64>,
    pub version: String,
    pub config_hash: Option<String>,
    pub timestamp: u64,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

struct Context {
    args: Vec<String>,
}

impl Context {
    fn write_manifest(
        &self,
        subcommand: &str,
        explicit: &ManifestArgs,
        config: Option<(&Path, &ScenarioConfig)>,
        outputs: &[&Path],
        master_seed: u64,
    ) -> Result<()> {
        let Some(path) = explicit.manifest.clone().or_else(|| {
            outputs.first().map(|p| {
                let mut s = p.as_os_str().to_owned();
                s.push(".manifest.json");
                PathBuf::from(s)
            })
        }) else {
            return Ok(());
        };
        let m = RunManifest {
            subcommand: subcommand.to_string(),
            args: self.args.clone(),
            config_path: config.map(|(p, _)| p.display().to_string()),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            master_seed: Some(master_seed),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.map(|(_, c)| c.hash()),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        };
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    ScenarioConfig::from_json(&fs::read_to_string(path)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

fn parse_kinds(names: &Option<Vec<String>>) -> Result<Vec<EstimatorKind>> {
    match names {
        None => Ok(EstimatorKind::ALL.to_vec()),
        Some(v) => v.iter().map(|s| s.trim().parse()).collect(),
    }
}

fn outputs_of(o: &OutputArgs) -> Vec<&Path> {
    o.out
        .iter()
        .chain(o.json.iter())
        .map(PathBuf::as_path)
        .collect()
}

fn dispatch(cmd: Command, ctx: &Context) -> Result<()> {
    match cmd {
        Command::Simulate {
            config,
            seed,
            out,
            latent,
            manifest,
        } => {
            let cfg = load_config(&config)?;
            let ds = generate_dataset(&cfg, seed)?;
            let mut w = create(&out)?;
            write_dataset_csv(&mut w, &ds, latent)?;
            w.flush()?;
            ctx.write_manifest("simulate", &manifest, Some((&config, &cfg)), &[&out], seed)
        }
        Command::Fit {
            data,
            estimator,
            basis,
        } => {
            let kind: EstimatorKind = estimator.parse()?;
            let obs = read_observations_csv(File::open(&data)?)?;
            let spec = basis.spec(kind, obs.grid.m());
            let b = if kind == EstimatorKind::NonSpatialOls {
                crate::basis::BasisSet::empty(obs.n())
            } else {
                fourier_basis_with_order(&obs.grid, spec.max_freq, spec.penalty_order)?
            };
            print_json(&spec.run(&obs, &b)?)
        }
        Command::Mc {
            config,
            estimators,
            reps,
            seed,
            basis,
            outputs,
        } => {
            let cfg = load_config(&config)?;
            let specs = parse_kinds(&estimators)?
                .into_iter()
                .map(|k| basis.spec(k, cfg.m))
                .collect();
            let summary = run_mc(&MCPlan::new(cfg.clone(), specs, reps, seed))?;
            if let Some(p) = &outputs.out {
                let mut w = create(p)?;
                summary.write_csv(&mut w)?;
                w.flush()?;
            }
            if let Some(p) = &outputs.json {
                write_text(p, &summary.to_json())?;
            }
            if outputs.out.is_none() && outputs.json.is_none() {
                summary.write_csv(io::stdout().lock())?;
            }
            ctx.write_manifest(
                "mc",
                &outputs.manifest,
                Some((&config, &cfg)),
                &outputs_of(&outputs),
                seed,
            )
        }
        Command::Targets { config } => print_json(&compute_estimands(&load_config(&config)?)?),
        Command::Scenario {
            config,
            kind,
            reps,
            seed,
            basis,
            outputs,
        } => {
            let cfg = match &config {
                Some(p) => load_config(p)?,
                None => ScenarioConfig::default(),
            };
            let kinds = if kind == "both" {
                ScenarioKind::ALL.to_vec()
            } else {
                vec![kind.parse()?]
            };
            let specs = [
                EstimatorKind::Spatial,
                EstimatorKind::SpatialPlus,
                EstimatorKind::Gsem,
            ]
            .into_iter()
            .map(|k| basis.spec(k, cfg.m))
            .collect();
            let base = MCPlan::new(cfg.clone(), specs, reps, seed);
            let reports = kinds
                .into_iter()
                .map(|k| scenario_experiment(k, &base))
                .collect::<Result<Vec<_>>>()?;
            let mut table = Vec::new();
            {
                let mut w = csv::Writer::from_writer(&mut table);
                w.write_record([
                    "scenario",
                    "abs_bias_spatial",
                    "abs_bias_spatial_plus",
                    "abs_bias_gsem",
                    "combined_mc_se",
                    "expected_winner",
                    "margin_in_se",
                    "prediction_holds",
                    "gsem_within_range",
                ])?;
                for r in &reports {
                    let v = &r.verdict;
                    w.write_record([
                        v.scenario.name().to_string(),
                        v.abs_bias_spatial.to_string(),
                        v.abs_bias_spatial_plus.to_string(),
                        v.abs_bias_gsem.to_string(),
                        v.combined_mc_se.to_string(),
                        v.expected_winner.name().to_string(),
                        v.margin_in_se.to_string(),
                        v.prediction_holds.to_string(),
                        v.gsem_within_range.to_string(),
                    ])?;
                }
                w.flush()?;
            }
            match &outputs.out {
                Some(p) => fs::write(p, &table)?,
                None if outputs.json.is_none() => io::stdout().lock().write_all(&table)?,
                None => {}
            }
            if let Some(p) = &outputs.json {
                write_text(p, &serde_json::to_string_pretty(&reports)?)?;
            }
            let cfg_ref = config.as_deref().map(|p| (p, &cfg));
            ctx.write_manifest(
                "scenario",
                &outputs.manifest,
                cfg_ref,
                &outputs_of(&outputs),
                seed,
            )
        }
        Command::AicBias {
            config,
            lambdas,
            reps,
            seed,
            max_freq,
            outputs,
        } => {
            let cfg = match &config {
                Some(p) => load_config(p)?,
                None => ScenarioConfig::default(),
            };
            let f = max_freq.unwrap_or_else(|| default_max_freq(cfg.m));
            let base = MCPlan::new(
                cfg.clone(),
                vec![EstimatorSpec::new(EstimatorKind::Spatial, f)],
                reps,
                seed,
            );
            let table = aic_bias_experiment(&base, lambdas.as_deref())?;
            if let Some(p) = &outputs.out {
                let mut w = create(p)?;
                table.write_csv(&mut w)?;
                w.flush()?;
            }
            if let Some(p) = &outputs.json {
                write_text(p, &serde_json::to_string_pretty(&table)?)?;
            }
            if outputs.out.is_none() && outputs.json.is_none() {
                table.write_csv(io::stdout().lock())?;
                eprintln!("flag: {}", table.flag);
            }
            let cfg_ref = config.as_deref().map(|p| (p, &cfg));
            ctx.write_manifest(
                "aic-bias",
                &outputs.manifest,
                cfg_ref,
                &outputs_of(&outputs),
                seed,
            )
        }
        Command::Replay { manifest } => {
            let m = RunManifest::read(&manifest)?;
            if m.subcommand == "replay" {
                return Err(Error::InvalidArgument("manifest records a replay".into()));
            }
            let mut argv = vec![OsString::from("spconf")];
            argv.extend(m.args.iter().map(OsString::from));
            let cli = Cli::try_parse_from(argv)
                .map_err(|e| Error::InvalidArgument(format!("manifest arguments: {e}")))?;
            let ctx = Context { args: m.args };
            dispatch(cli.command, &ctx)
        }
    }
}

/// Parse `argv` (program name first), run, and return the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let ctx = Context {
        args: argv
            .iter()
            .skip(1)
            .map(|a| a.to_string_lossy().into_owned())
            .collect(),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| dispatch(cli.command, &ctx)),
        Err(e) => Err(Error::InvalidArgument(format!("thread pool: {e}"))),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
