//! Data generation from the additive spatial model
//!
//! ```text
//! Z = a1 S1 + a2 (S2 + E) + a3 C + nu
//! Y = b0 + b1 Z + b2 C + b3 S1 + b4 (S2 + E) + b5 U + eps
//! ```
//!
//! `S1`, `S2` are completely spatial (band-limited), `E`, `U`, `nu`, `eps` are
//! iid, and `C` is either. Latent components are kept on the [`Dataset`] for
//! oracle checks; estimators only ever see [`Observations`].

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{make_grid, sample_grf, sample_iid, FieldSpec, LocationGrid, SpectralSpec};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// `(b0, ..., b5)` outcome coefficients.
    pub beta: [f64; 6],
    /// `(a1, a2, a3)`: loadings of `S1`, `S2 + E` and `C` in the exposure.
    pub loadings: [f64; 3],
    pub nu_sd: f64,
    pub sigma: f64,
    #[serde(rename = "spec_S1")]
    pub spec_s1: SpectralSpec,
    #[serde(rename = "spec_S2")]
    pub spec_s2: SpectralSpec,
    #[serde(rename = "spec_C")]
    pub spec_c: FieldSpec,
    pub e_sd: f64,
    pub u_sd: f64,
    pub m: usize,
}

impl Default for ScenarioConfig {
    /// Low-frequency `S1` in band `[1,2]`, high-frequency `S2` in `[6,10]`,
    /// iid `C`, on a 32 x 32 grid.
    fn default() -> Self {
        Self {
            beta: [0.0, 2.0, 1.0, 1.0, 1.0, 0.0],
            loadings: [1.0, 1.0, 0.5],
            nu_sd: 1.0,
            sigma: 0.5,
            spec_s1: SpectralSpec::new(1, 2, 0.0, 1.0),
            spec_s2: SpectralSpec::new(6, 10, 0.0, 1.0),
            spec_c: FieldSpec::Iid { sd: 1.0 },
            e_sd: 0.5,
            u_sd: 0.0,
            m: 32,
        }
    }
}

fn config_err(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        for (i, b) in self.beta.iter().enumerate() {
            if !b.is_finite() {
                return Err(config_err("beta", format!("beta[{i}] is not finite")));
            }
        }
        for (i, a) in self.loadings.iter().enumerate() {
            if !a.is_finite() {
                return Err(config_err(
                    "loadings",
                    format!("loadings[{i}] is not finite"),
                ));
            }
        }
        for (name, sd) in [
            ("nu_sd", self.nu_sd),
            ("sigma", self.sigma),
            ("e_sd", self.e_sd),
            ("u_sd", self.u_sd),
        ] {
            if !(sd.is_finite() && sd >= 0.0) {
                return Err(config_err(
                    name,
                    format!("must be finite and >= 0, got {sd}"),
                ));
            }
        }
        if !(2..=crate::fields::MAX_GRID).contains(&self.m) {
            return Err(config_err(
                "m",
                format!("grid size {} outside [2, 512]", self.m),
            ));
        }
        let half = self.m / 2;
        for (name, s) in [("spec_S1", self.spec_s1), ("spec_S2", self.spec_s2)] {
            s.validate().map_err(|e| config_err(name, e.to_string()))?;
            if s.k_max > half {
                return Err(config_err(
                    name,
                    format!("k_max {} exceeds m/2 = {half}", s.k_max),
                ));
            }
        }
        match self.spec_c {
            FieldSpec::Spectral { .. } => {
                let s = self.spec_c.as_spectral().unwrap();
                s.validate()
                    .map_err(|e| config_err("spec_C", e.to_string()))?;
                if s.k_max > half {
                    return Err(config_err(
                        "spec_C",
                        format!("k_max {} exceeds m/2 = {half}", s.k_max),
                    ));
                }
            }
            FieldSpec::Iid { sd } => {
                if !(sd.is_finite() && sd >= 0.0) {
                    return Err(config_err(
                        "spec_C",
                        format!("sd must be finite and >= 0, got {sd}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Parse and validate a JSON config document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig {
            field: missing_field_name(&e.to_string()).unwrap_or_else(|| "<document>".into()),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical (compact) JSON encoding.
    pub fn hash(&self) -> String {
        crate::seed::sha256_hex(
            serde_json::to_string(self)
                .expect("config serializes")
                .as_bytes(),
        )
    }
}

fn missing_field_name(msg: &str) -> Option<String> {
    let start = msg.find("field `")? + "field `".len();
    let end = msg[start..].find('`')? + start;
    Some(msg[start..end].to_string())
}

/// What an analyst observes: exposure, measured covariate and outcome on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub grid: LocationGrid,
    pub z: Vec<f64>,
    pub c: Vec<f64>,
    pub y: Vec<f64>,
}

impl Observations {
    pub fn new(grid: LocationGrid, z: Vec<f64>, c: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = grid.n();
        if z.len() != n || c.len() != n || y.len() != n {
            return Err(Error::Dimension(format!(
                "observation lengths (Z {}, C {}, Y {}) must all equal n = {n}",
                z.len(),
                c.len(),
                y.len()
            )));
        }
        Ok(Self { grid, z, c, y })
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    /// Apply a row permutation consistently to the grid and all columns.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let pick = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            grid: self.grid.permuted(perm),
            z: pick(&self.z),
            c: pick(&self.c),
            y: pick(&self.y),
        }
    }
}

/// Latent components behind a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub e: Vec<f64>,
    pub u: Vec<f64>,
    pub nu: Vec<f64>,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub obs: Observations,
    pub latent: Latent,
    pub config: ScenarioConfig,
    pub seed: u64,
}

/// Draw every field independently from `seed` and assemble `Z` and `Y`.
pub fn generate_dataset(config: &ScenarioConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let grid = make_grid(config.m)?;
    let s1 = sample_grf(&grid, &config.spec_s1, derive_seed(seed, "S1", 0))?.values;
    let s2 = sample_grf(&grid, &config.spec_s2, derive_seed(seed, "S2", 0))?.values;
    let c = config
        .spec_c
        .sample(&grid, derive_seed(seed, "C", 0))?
        .values;
    let e = sample_iid(&grid, config.e_sd, derive_seed(seed, "E", 0))?.values;
    let u = sample_iid(&grid, config.u_sd, derive_seed(seed, "U", 0))?.values;
    let nu = sample_iid(&grid, config.nu_sd, derive_seed(seed, "nu", 0))?.values;
    let eps = sample_iid(&grid, config.sigma, derive_seed(seed, "eps", 0))?.values;

    let [a1, a2, a3] = config.loadings;
    let [b0, b1, b2, b3, b4, b5] = config.beta;
    let n = grid.n();
    let mut z = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let s2p = s2[i] + e[i];
        let zi = a1 * s1[i] + a2 * s2p + a3 * c[i] + nu[i];
        z.push(zi);
        y.push(b0 + b1 * zi + b2 * c[i] + b3 * s1[i] + b4 * s2p + b5 * u[i] + eps[i]);
    }
    Ok(Dataset {
        obs: Observations { grid, z, c, y },
        latent: Latent {
            s1,
            s2,
            e,
            u,
            nu,
            eps,
        },
        config: config.clone(),
        seed,
    })
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Share of exposure variance carried by completely spatial parts:
/// `var(Z - nu - a2 E) / var(Z)`, clamped to `[0, 1]`.
pub fn exposure_spatial_fraction(ds: &Dataset) -> Result<f64> {
    let vz = variance(&ds.obs.z);
    if vz <= 0.0 {
        return Err(Error::DegenerateExposure);
    }
    let a2 = ds.config.loadings[1];
    let spatial: Vec<f64> = ds
        .obs
        .z
        .iter()
        .zip(&ds.latent.nu)
        .zip(&ds.latent.e)
        .map(|((z, nu), e)| z - nu - a2 * e)
        .collect();
    Ok((variance(&spatial) / vz).clamp(0.0, 1.0))
}

const OBS_COLUMNS: [&str; 5] = ["x", "y", "Z", "C", "Y"];
const LATENT_COLUMNS: [&str; 6] = ["S1", "S2", "E", "U", "nu", "eps"];

/// Write `x,y,Z,C,Y` (plus latent columns when `latent` is set) in grid order.
pub fn write_dataset_csv<W: Write>(out: W, ds: &Dataset, latent: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = OBS_COLUMNS.to_vec();
    if latent {
        header.extend(LATENT_COLUMNS);
    }
    w.write_record(&header)?;
    let o = &ds.obs;
    let l = &ds.latent;
    for i in 0..o.n() {
        let c = o.grid.coords()[i];
        let mut row = vec![c[0], c[1], o.z[i], o.c[i], o.y[i]];
        if latent {
            row.extend([l.s1[i], l.s2[i], l.e[i], l.u[i], l.nu[i], l.eps[i]]);
        }
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Read observations from CSV with (at least) the columns `x,y,Z,C,Y`.
///
/// The row count must be a perfect square; the grid keeps the file's row order.
pub fn read_observations_csv<R: Read>(input: R) -> Result<Observations> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(OBS_COLUMNS) {
        *slot = header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("missing required column `{name}`")))?;
    }
    let mut cols: [Vec<f64>; 5] = Default::default();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        for (k, &j) in idx.iter().enumerate() {
            let field = rec.get(j).unwrap_or("");
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::InvalidArgument(format!(
                    "row {}: column `{}` is not a number: {field:?}",
                    line + 1,
                    OBS_COLUMNS[k]
                ))
            })?;
            cols[k].push(v);
        }
    }
    let n = cols[0].len();
    let m = (n as f64).sqrt().round() as usize;
    if m * m != n {
        return Err(Error::InvalidArgument(format!(
            "{n} rows is not a square grid"
        )));
    }
    let [xs, ys, z, c, y] = cols;
    let coords = xs.into_iter().zip(ys).map(|(x, y)| [x, y]).collect();
    let grid = LocationGrid::from_coords(m, coords)?;
    Observations::new(grid, z, c, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / (1.0 + b.abs())
    }

    #[test]
    fn reconstruction_identities() {
        let cfg = ScenarioConfig {
            u_sd: 0.7,
            beta: [0.3, 2.0, 1.0, -1.0, 0.5, 0.8],
            ..Default::default()
        };
        let ds = generate_dataset(&cfg, 11).unwrap();
        let [a1, a2, a3] = cfg.loadings;
        let [b0, b1, b2, b3, b4, b5] = cfg.beta;
        let (o, l) = (&ds.obs, &ds.latent);
        for i in 0..o.n() {
            let s2p = l.s2[i] + l.e[i];
            let z = a1 * l.s1[i] + a2 * s2p + a3 * o.c[i] + l.nu[i];
            let y =
                b0 + b1 * o.z[i] + b2 * o.c[i] + b3 * l.s1[i] + b4 * s2p + b5 * l.u[i] + l.eps[i];
            assert!(rel(o.z[i], z) < 1e-12);
            assert!(rel(o.y[i], y) < 1e-12);
        }
    }

    #[test]
    fn constant_outcome() {
        let cfg = ScenarioConfig {
            beta: [2.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            sigma: 0.0,
            ..Default::default()
        };
        let ds = generate_dataset(&cfg, 3).unwrap();
        assert!(ds.obs.y.iter().all(|&y| y == 2.0));
    }

    #[test]
    fn noiseless_latent_ols_recovers_beta() {
        let cfg = ScenarioConfig {
            beta: [0.5, 2.0, -1.0, 1.5, 0.7, 0.4],
            sigma: 0.0,
            u_sd: 1.0,
            m: 16,
            spec_s2: SpectralSpec::new(4, 7, 0.0, 1.0),
            ..Default::default()
        };
        let ds = generate_dataset(&cfg, 17).unwrap();
        let n = ds.obs.n();
        let (o, l) = (&ds.obs, &ds.latent);
        let x = DMatrix::from_fn(n, 7, |i, j| match j {
            0 => 1.0,
            1 => o.z[i],
            2 => o.c[i],
            3 => l.s1[i],
            4 => l.s2[i],
            5 => l.e[i],
            _ => l.u[i],
        });
        let y = DVector::from_column_slice(&o.y);
        let coef = x.clone().svd(true, true).solve(&y, 1e-14).unwrap();
        let b = cfg.beta;
        let expect = [b[0], b[1], b[2], b[3], b[4], b[4], b[5]];
        for (c, e) in coef.iter().zip(expect) {
            assert!(rel(*c, e) < 1e-8, "{c} vs {e}");
        }
    }

    #[test]
    fn unconfounded_exposure_is_uncorrelated_with_s1() {
        let cfg = ScenarioConfig {
            loadings: [0.0, 0.0, 0.5],
            m: 64,
            ..Default::default()
        };
        let ds = generate_dataset(&cfg, 5).unwrap();
        let z = &ds.obs.z;
        let s = &ds.latent.s1;
        let n = z.len() as f64;
        let mz = z.iter().sum::<f64>() / n;
        let ms = s.iter().sum::<f64>() / n;
        let cov: f64 = z
            .iter()
            .zip(s)
            .map(|(a, b)| (a - mz) * (b - ms))
            .sum::<f64>()
            / n;
        let corr = cov / (variance(z).sqrt() * variance(s).sqrt());
        assert!(corr.abs() < 0.05, "corr {corr}");
    }

    #[test]
    fn seeds_change_every_field() {
        let cfg = ScenarioConfig::default();
        let a = generate_dataset(&cfg, 1).unwrap();
        let b = generate_dataset(&cfg, 2).unwrap();
        assert_eq!(a, generate_dataset(&cfg, 1).unwrap());
        assert_ne!(a.latent.s1, b.latent.s1);
        assert_ne!(a.latent.s2, b.latent.s2);
        assert_ne!(a.latent.e, b.latent.e);
        assert_ne!(a.latent.nu, b.latent.nu);
        assert_ne!(a.latent.eps, b.latent.eps);
        assert_ne!(a.obs.c, b.obs.c);
    }

    #[test]
    fn spatial_fraction_cases() {
        let full = ScenarioConfig {
            nu_sd: 0.0,
            e_sd: 0.0,
            loadings: [1.0, 1.0, 0.0],
            ..Default::default()
        };
        let f = exposure_spatial_fraction(&generate_dataset(&full, 1).unwrap()).unwrap();
        assert!((f - 1.0).abs() < 1e-12);

        let none = ScenarioConfig {
            loadings: [0.0, 0.0, 0.0],
            ..Default::default()
        };
        let f = exposure_spatial_fraction(&generate_dataset(&none, 1).unwrap()).unwrap();
        assert!(f.abs() < 1e-12);

        let half = ScenarioConfig {
            loadings: [1.0, 0.0, 0.0],
            m: 64,
            ..Default::default()
        };
        let f = exposure_spatial_fraction(&generate_dataset(&half, 9).unwrap()).unwrap();
        assert!((f - 0.5).abs() < 0.05, "fraction {f}");

        let dead = ScenarioConfig {
            loadings: [0.0, 0.0, 0.0],
            nu_sd: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            exposure_spatial_fraction(&generate_dataset(&dead, 1).unwrap()),
            Err(Error::DegenerateExposure)
        ));
    }

    #[test]
    fn config_json_round_trip_and_errors() {
        let cfg = ScenarioConfig::default();
        assert_eq!(ScenarioConfig::from_json(&cfg.to_json()).unwrap(), cfg);

        let mut v: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
        v.as_object_mut().unwrap().remove("beta");
        match ScenarioConfig::from_json(&v.to_string()) {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "beta"),
            other => panic!("unexpected {other:?}"),
        }

        let bad = ScenarioConfig {
            nu_sd: -1.0,
            ..Default::default()
        };
        match ScenarioConfig::from_json(&bad.to_json()) {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "nu_sd"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_observations() {
        let cfg = ScenarioConfig {
            m: 8,
            spec_s2: SpectralSpec::new(3, 4, 0.0, 1.0),
            ..Default::default()
        };
        let ds = generate_dataset(&cfg, 4).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &ds, true).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,y,Z,C,Y,S1,S2,E,U,nu,eps\n"));
        assert_eq!(text.lines().count(), 65);
        let obs = read_observations_csv(buf.as_slice()).unwrap();
        assert_eq!(obs, ds.obs);
    }

    #[test]
    fn csv_missing_column() {
        let text = "x,y,Z,Y\n0.25,0.25,1,2\n";
        let err = read_observations_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("`C`"));
    }
}
