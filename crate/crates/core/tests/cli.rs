use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use spconf::dgp::ScenarioConfig;
use spconf::fields::{FieldSpec, SpectralSpec};

fn spconf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spconf"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_config() -> ScenarioConfig {
    ScenarioConfig {
        m: 16,
        spec_s2: SpectralSpec::new(5, 7, 0.0, 1.0),
        ..Default::default()
    }
}

fn no_confounding() -> ScenarioConfig {
    ScenarioConfig {
        loadings: [0.0, 0.0, 0.5],
        beta: [0.0, 2.0, 1.0, 0.0, 0.0, 0.0],
        ..small_config()
    }
}

fn write_config(dir: &Path, name: &str, c: &ScenarioConfig) {
    fs::write(dir.join(name), c.to_json()).unwrap();
}

#[test]
fn simulate_is_byte_identical_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", &small_config());
    for out in ["a.csv", "b.csv"] {
        let o = spconf(
            dir.path(),
            &[
                "simulate", "--config", "c.json", "--seed", "9", "--out", out,
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 256);
    assert!(text.starts_with("x,y,Z,C,Y\n"));
    assert!(dir.path().join("a.csv.manifest.json").exists());

    let o = spconf(
        dir.path(),
        &[
            "simulate", "--config", "c.json", "--seed", "9", "--out", "l.csv", "--latent",
        ],
    );
    assert!(o.status.success());
    let l = fs::read_to_string(dir.path().join("l.csv")).unwrap();
    assert!(l.starts_with("x,y,Z,C,Y,S1,S2,E,U,nu,eps\n"));
}

#[test]
fn config_without_beta_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&small_config().to_json()).unwrap();
    v.as_object_mut().unwrap().remove("beta");
    fs::write(dir.path().join("c.json"), v.to_string()).unwrap();
    let o = spconf(
        dir.path(),
        &[
            "simulate", "--config", "c.json", "--seed", "1", "--out", "d.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("beta"), "{}", stderr(&o));
}

#[test]
fn unreadable_paths_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = spconf(dir.path(), &["targets", "--config", "missing.json"]);
    assert_eq!(o.status.code(), Some(3));
    write_config(dir.path(), "c.json", &small_config());
    let o = spconf(
        dir.path(),
        &[
            "simulate",
            "--config",
            "c.json",
            "--seed",
            "1",
            "--out",
            "no/such/dir/d.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn fit_recovers_beta_without_confounding() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", &no_confounding());
    assert!(spconf(
        dir.path(),
        &["simulate", "--config", "c.json", "--seed", "4", "--out", "d.csv"]
    )
    .status
    .success());
    let o = spconf(
        dir.path(),
        &["fit", "--data", "d.csv", "--estimator", "nonspatial"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rec: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let beta = rec["beta1_hat"].as_f64().unwrap();
    let se = rec["se"].as_f64().unwrap();
    assert!((beta - 2.0).abs() < 3.0 * se, "beta {beta} se {se}");
    assert_eq!(rec["kind"], "nonspatial");
}

#[test]
fn fully_spatial_exposure_exits_with_degeneracy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig {
        nu_sd: 0.0,
        e_sd: 0.0,
        spec_c: FieldSpec::Iid { sd: 0.0 },
        ..small_config()
    };
    write_config(dir.path(), "c.json", &cfg);
    assert!(spconf(
        dir.path(),
        &["simulate", "--config", "c.json", "--seed", "2", "--out", "d.csv"]
    )
    .status
    .success());
    let o = spconf(
        dir.path(),
        &[
            "fit",
            "--data",
            "d.csv",
            "--estimator",
            "spatial",
            "--lambda",
            "0",
            "--max-freq",
            "7",
        ],
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("collinear"), "{}", stderr(&o));

    let o = spconf(dir.path(), &["targets", "--config", "c.json"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("estimand undefined"));
}

#[test]
fn unknown_estimator_lists_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", &small_config());
    spconf(
        dir.path(),
        &[
            "simulate", "--config", "c.json", "--seed", "2", "--out", "d.csv",
        ],
    );
    let o = spconf(
        dir.path(),
        &["fit", "--data", "d.csv", "--estimator", "kriging"],
    );
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    for name in [
        "nonspatial",
        "rsr",
        "spatial-plus",
        "gsem",
        "spatial-plus-lowfreq",
    ] {
        assert!(msg.contains(name), "{msg}");
    }
}

#[test]
fn missing_column_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("d.csv"), "x,y,Z,Y\n0.25,0.25,1,2\n").unwrap();
    let o = spconf(
        dir.path(),
        &["fit", "--data", "d.csv", "--estimator", "nonspatial"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`C`"));
}

#[test]
fn targets_without_confounding_are_all_beta() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", &no_confounding());
    let o = spconf(dir.path(), &["targets", "--config", "c.json"]);
    assert!(o.status.success());
    let t: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for key in [
        "beta_structural",
        "beta_uncond",
        "beta_cond_achieved",
        "beta_cond_S1",
    ] {
        assert!((t[key].as_f64().unwrap() - 2.0).abs() < 1e-12, "{key}");
    }
}

#[test]
fn mc_table_has_one_row_per_cell_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", &small_config());
    let o = spconf(
        dir.path(),
        &[
            "mc", "--config", "c.json", "--reps", "2", "--seed", "5", "--out", "s.csv", "--json",
            "s.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read(dir.path().join("s.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&csv).lines().count(), 1 + 6 * 4);
    let json = fs::read(dir.path().join("s.json")).unwrap();

    fs::remove_file(dir.path().join("s.csv")).unwrap();
    fs::remove_file(dir.path().join("s.json")).unwrap();
    let o = spconf(
        dir.path(),
        &[
            "--threads",
            "2",
            "replay",
            "--manifest",
            "s.csv.manifest.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(dir.path().join("s.csv")).unwrap(), csv);
    assert_eq!(fs::read(dir.path().join("s.json")).unwrap(), json);

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("s.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "mc");
    assert_eq!(manifest["master_seed"], 5);
    assert_eq!(manifest["config_hash"], small_config().hash());
}

#[test]
fn scenario_and_aic_bias_emit_tables() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", &small_config());
    let o = spconf(
        dir.path(),
        &[
            "scenario",
            "--config",
            "c.json",
            "--reps",
            "3",
            "--max-freq",
            "4",
            "--out",
            "v.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v = fs::read_to_string(dir.path().join("v.csv")).unwrap();
    assert_eq!(v.lines().count(), 3);

    let o = spconf(
        dir.path(),
        &[
            "aic-bias",
            "--config",
            "c.json",
            "--reps",
            "3",
            "--lambdas",
            "1,10",
            "--max-freq",
            "4",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let t = String::from_utf8(o.stdout).unwrap();
    assert_eq!(t.lines().count(), 1 + 3);
    assert!(t.lines().nth(1).unwrap().starts_with("0,"));
}

#[test]
fn help_lists_subcommands() {
    let o = spconf(Path::new("."), &["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for sub in [
        "simulate", "fit", "mc", "targets", "scenario", "aic-bias", "replay",
    ] {
        assert!(text.contains(sub), "{sub}");
    }
    assert_eq!(
        spconf(Path::new("."), &["frobnicate"]).status.code(),
        Some(2)
    );
}
