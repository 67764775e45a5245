//! Build the tensor Fourier basis, check its Gram structure and restrict it
//! to low frequencies.
//!
//! `cargo run --example fourier_basis`

use spconf::basis::{fourier_basis, restrict_low_frequency};
use spconf::fields::make_grid;

fn main() -> spconf::Result<()> {
    let grid = make_grid(32)?;
    let b = fourier_basis(&grid, 10)?;
    println!(
        "max_freq 10: {} columns, orthogonal = {}",
        b.p(),
        b.orthogonal_gram().is_some()
    );

    let gram = b.columns().transpose() * b.columns();
    let off = (0..b.p())
        .flat_map(|i| (0..b.p()).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| gram[(i, j)].abs())
        .fold(0.0, f64::max);
    println!("largest off-diagonal Gram entry: {off:.2e}");

    let low = restrict_low_frequency(&b, 2)?;
    println!(
        "cutoff 2: {} columns, penalties {:?}",
        low.p(),
        &low.penalty()[..4]
    );
    Ok(())
}
