//! Sample a band-limited field and an iid field, then show where the
//! spectral energy sits.
//!
//! `cargo run --example random_fields`

use spconf::fields::{field_dft_energy, make_grid, sample_grf, sample_iid, SpectralSpec};

fn main() -> spconf::Result<()> {
    let grid = make_grid(32)?;
    let smooth = sample_grf(&grid, &SpectralSpec::new(3, 5, 0.0, 1.0), 7)?;
    let noise = sample_iid(&grid, 1.0, 7)?;

    let a = field_dft_energy(&smooth.values, &grid)?;
    let b = field_dft_energy(&noise.values, &grid)?;
    println!("shell   band[3,5]      iid");
    for (k, e) in &a {
        println!("{k:>5} {e:>12.3e} {:>10.4}", b[k]);
    }
    Ok(())
}
