#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spconf::dgp::{Dataset, ScenarioConfig};

/// OLS of `y` on an intercept plus `cols`; returns `(coefs, ses)` with the
/// intercept first.
pub fn ols(y: &[f64], cols: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    let k = cols.len() + 1;
    let row = |i: usize| {
        let mut r = Vec::with_capacity(k);
        r.push(1.0);
        r.extend(cols.iter().map(|c| c[i]));
        r
    };
    let mut xtx = DMatrix::<f64>::zeros(k, k);
    let mut xty = DVector::<f64>::zeros(k);
    for (i, yi) in y.iter().enumerate() {
        let r = row(i);
        for a in 0..k {
            xty[a] += r[a] * yi;
            for b in 0..k {
                xtx[(a, b)] += r[a] * r[b];
            }
        }
    }
    let inv = xtx.try_inverse().expect("full rank design");
    let coef = &inv * xty;
    let rss: f64 = (0..n)
        .map(|i| {
            let f: f64 = row(i).iter().zip(coef.iter()).map(|(x, b)| x * b).sum();
            (y[i] - f).powi(2)
        })
        .sum();
    let s2 = rss / (n - k) as f64;
    let se = (0..k).map(|a| (s2 * inv[(a, a)]).sqrt()).collect();
    (coef.as_slice().to_vec(), se)
}

/// Z coefficient and SE from latent-column OLS of Y on (1, Z, C, S1, S2).
pub fn achieved_ols(ds: &Dataset) -> (f64, f64) {
    let (b, se) = ols(
        &ds.obs.y,
        &[&ds.obs.z, &ds.obs.c, &ds.latent.s1, &ds.latent.s2],
    );
    (b[1], se[1])
}

/// Random outcome and exposure coefficients on the default field layout.
pub fn random_config(seed: u64, m: usize) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = ScenarioConfig {
        m,
        ..Default::default()
    };
    for b in c.beta.iter_mut() {
        *b = rng.random_range(-2.0..2.0);
    }
    for a in c.loadings.iter_mut() {
        *a = rng.random_range(-2.0..2.0);
    }
    c.nu_sd = rng.random_range(0.3..1.5);
    c.e_sd = rng.random_range(0.2..1.2);
    c.u_sd = rng.random_range(0.0..1.0);
    c.sigma = rng.random_range(0.2..1.0);
    c
}
