//! Penalized least squares with GCV on a smooth surface plus a linear term.
//!
//! `cargo run --example penalized_fit`

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use spconf::basis::fourier_basis;
use spconf::fields::{make_grid, sample_grf, SpectralSpec};
use spconf::pls::{default_lambda_grid, fit_pls, select_lambda_gcv, FixedDesign};

fn main() -> spconf::Result<()> {
    let grid = make_grid(24)?;
    let surface = sample_grf(&grid, &SpectralSpec::new(1, 3, 0.0, 1.0), 1)?.values;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(2);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let x: Vec<f64> = (0..grid.n())
        .map(|_| noise.sample(&mut rng) * 2.0)
        .collect();
    let y: Vec<f64> = (0..grid.n())
        .map(|i| 1.5 * x[i] + surface[i] + noise.sample(&mut rng))
        .collect();

    let fixed = FixedDesign::with_intercept(grid.n(), &[("x", &x)])?;
    let basis = fourier_basis(&grid, 8)?;
    let best = select_lambda_gcv(&y, &fixed, &basis, &default_lambda_grid())?;
    println!(
        "GCV: lambda {:.3e}, edf {:.1}, x = {:.4} (se {:.4}), sigma^2 {:.3}",
        best.lambda,
        best.edf,
        best.coef("x").unwrap(),
        best.se("x").unwrap(),
        best.sigma2_hat
    );
    for lambda in [0.0, 1.0, 1e3, f64::INFINITY] {
        let f = fit_pls(&y, &fixed, &basis, lambda)?;
        println!(
            "lambda {lambda:>8}: edf {:>6.1}  gcv {:.4}  aic {:.1}",
            f.edf, f.gcv, f.aic
        );
    }
    Ok(())
}
