//! Tensor-product Fourier bases with frequency labels and diagonal roughness
//! penalties.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fields::{half_lattice, LocationGrid, PhaseTable};

/// Evaluated spatial basis. The constant function is never included; it
/// belongs to the fixed design.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    columns: DMatrix<f64>,
    freq: Vec<usize>,
    penalty: Vec<f64>,
    max_freq: usize,
    /// Squared column norms when the columns are mutually orthogonal.
    gram_diag: Option<Vec<f64>>,
}

const ORTHO_TOL: f64 = 1e-10;

impl BasisSet {
    /// A basis with no columns on `n` points.
    pub fn empty(n: usize) -> Self {
        Self {
            columns: DMatrix::zeros(n, 0),
            freq: Vec::new(),
            penalty: Vec::new(),
            max_freq: 0,
            gram_diag: Some(Vec::new()),
        }
    }

    /// Wrap arbitrary basis columns. Orthogonality is detected numerically.
    pub fn from_columns(
        columns: DMatrix<f64>,
        freq: Vec<usize>,
        penalty: Vec<f64>,
    ) -> Result<Self> {
        let p = columns.ncols();
        if freq.len() != p || penalty.len() != p {
            return Err(Error::Dimension(format!(
                "{p} columns but {} frequency labels and {} penalty weights",
                freq.len(),
                penalty.len()
            )));
        }
        if penalty.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "penalty weights must be finite and >= 0".into(),
            ));
        }
        let gram = columns.tr_mul(&columns);
        let diag: Vec<f64> = (0..p).map(|j| gram[(j, j)]).collect();
        let orthogonal = (0..p)
            .all(|i| (0..i).all(|j| gram[(i, j)].abs() <= ORTHO_TOL * (diag[i] * diag[j]).sqrt()))
            && diag.iter().all(|&d| d > 0.0);
        let max_freq = freq.iter().copied().max().unwrap_or(0);
        Ok(Self {
            columns,
            freq,
            penalty,
            max_freq,
            gram_diag: orthogonal.then_some(diag),
        })
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn freq(&self) -> &[usize] {
        &self.freq
    }

    pub fn penalty(&self) -> &[f64] {
        &self.penalty
    }

    pub fn max_freq(&self) -> usize {
        self.max_freq
    }

    pub fn n(&self) -> usize {
        self.columns.nrows()
    }

    pub fn p(&self) -> usize {
        self.columns.ncols()
    }

    /// Column squared norms, present iff the columns are mutually orthogonal.
    pub fn orthogonal_gram(&self) -> Option<&[f64]> {
        self.gram_diag.as_deref()
    }

    /// Apply a row permutation `out[i] = self[perm[i]]`.
    pub fn permuted_rows(&self, perm: &[usize]) -> Self {
        let cols = DMatrix::from_fn(perm.len(), self.p(), |i, j| self.columns[(perm[i], j)]);
        Self {
            columns: cols,
            freq: self.freq.clone(),
            penalty: self.penalty.clone(),
            max_freq: self.max_freq,
            gram_diag: self.gram_diag.clone(),
        }
    }

    /// Same columns, but treated as a general (non-orthogonal) basis.
    #[cfg(test)]
    pub(crate) fn without_orthogonality(&self) -> Self {
        Self {
            gram_diag: None,
            ..self.clone()
        }
    }

    /// Keep only the listed columns.
    fn select(&self, keep: &[usize]) -> Self {
        let columns = self.columns.select_columns(keep);
        Self {
            columns,
            freq: keep.iter().map(|&j| self.freq[j]).collect(),
            penalty: keep.iter().map(|&j| self.penalty[j]).collect(),
            max_freq: self.max_freq,
            gram_diag: self
                .gram_diag
                .as_ref()
                .map(|d| keep.iter().map(|&j| d[j]).collect()),
        }
    }
}

/// `true` when every regular-grid cell appears exactly once at its center.
fn is_regular_grid(grid: &LocationGrid) -> bool {
    let m = grid.m();
    let mut seen = vec![false; m * m];
    for (&(i, j), c) in grid.cell_indices().iter().zip(grid.coords()) {
        let cx = (i as f64 + 0.5) / m as f64;
        let cy = (j as f64 + 0.5) / m as f64;
        if (c[0] - cx).abs() > 1e-12 || (c[1] - cy).abs() > 1e-12 || seen[j * m + i] {
            return false;
        }
        seen[j * m + i] = true;
    }
    true
}

/// Fourier basis with the default first-order roughness penalty (`q = 1`).
pub fn fourier_basis(grid: &LocationGrid, max_freq: usize) -> Result<BasisSet> {
    fourier_basis_with_order(grid, max_freq, 1)
}

/// `cos` and `sin` of `2 pi (k1 x + k2 y)` over the half-lattice with
/// `1 <= |k|_inf <= max_freq`. A column labelled `f` gets penalty `f^(2q)`.
pub fn fourier_basis_with_order(grid: &LocationGrid, max_freq: usize, q: u32) -> Result<BasisSet> {
    let m = grid.m();
    if max_freq < 1 || max_freq + 1 > m / 2 {
        return Err(Error::InvalidArgument(format!(
            "max_freq = {max_freq} outside [1, m/2 - 1] for m = {m}"
        )));
    }
    let lattice = half_lattice(1, max_freq);
    let p = 2 * lattice.len();
    let mut columns = DMatrix::zeros(grid.n(), p);
    let mut table = PhaseTable::new(max_freq);
    for (row, &pt) in grid.coords().iter().enumerate() {
        table.fill(pt);
        for (t, &k) in lattice.iter().enumerate() {
            let (c, s) = table.cos_sin(k);
            columns[(row, 2 * t)] = c;
            columns[(row, 2 * t + 1)] = s;
        }
    }
    let mut freq = Vec::with_capacity(p);
    for &(k1, k2) in &lattice {
        let f = k1.unsigned_abs().max(k2.unsigned_abs()) as usize;
        freq.push(f);
        freq.push(f);
    }
    let penalty = freq
        .iter()
        .map(|&f| (f as f64).powi(2 * q as i32))
        .collect();

    if is_regular_grid(grid) {
        let diag = (0..p).map(|j| columns.column(j).norm_squared()).collect();
        Ok(BasisSet {
            columns,
            freq,
            penalty,
            max_freq,
            gram_diag: Some(diag),
        })
    } else {
        let mut b = BasisSet::from_columns(columns, freq, penalty)?;
        b.max_freq = max_freq;
        Ok(b)
    }
}

/// Keep exactly the columns whose frequency label is `<= cutoff`.
pub fn restrict_low_frequency(b: &BasisSet, cutoff: usize) -> Result<BasisSet> {
    if cutoff < 1 || cutoff > b.max_freq {
        return Err(Error::InvalidArgument(format!(
            "cutoff = {cutoff} outside [1, {}]",
            b.max_freq
        )));
    }
    let keep: Vec<usize> = (0..b.p()).filter(|&j| b.freq[j] <= cutoff).collect();
    let mut out = b.select(&keep);
    out.max_freq = cutoff;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_grid, sample_grf, SpectralSpec};
    use nalgebra::DVector;

    /// Least-squares residual norm ratio of `v` against `[1 | B]`.
    fn residual_ratio(b: &BasisSet, v: &[f64], with_constant: bool) -> f64 {
        let n = v.len();
        let extra = usize::from(with_constant);
        let x = DMatrix::from_fn(n, b.p() + extra, |i, j| {
            if with_constant && j == 0 {
                1.0
            } else {
                b.columns()[(i, j - extra)]
            }
        });
        let y = DVector::from_column_slice(v);
        let coef = x.clone().svd(true, true).solve(&y, 1e-12).unwrap();
        (&y - &x * coef).norm() / y.norm()
    }

    #[test]
    fn eight_columns_at_frequency_one() {
        let g = make_grid(8).unwrap();
        let b = fourier_basis(&g, 1).unwrap();
        // brute-force count of lattice points with |k|_inf = 1 modulo sign, times (cos, sin)
        let mut reps = 0;
        for k1 in -1i64..=1 {
            for k2 in -1i64..=1 {
                if k1.abs().max(k2.abs()) == 1 && (k2 > 0 || (k2 == 0 && k1 > 0)) {
                    reps += 1;
                }
            }
        }
        assert_eq!(b.p(), 2 * reps);
        assert_eq!(b.p(), 8);
        assert!(b.freq().iter().all(|&f| f == 1));
    }

    #[test]
    fn gram_is_diagonal() {
        let g = make_grid(16).unwrap();
        let b = fourier_basis(&g, 7).unwrap();
        let gram = b.columns().tr_mul(b.columns());
        for i in 0..b.p() {
            for j in 0..i {
                let scale = (gram[(i, i)] * gram[(j, j)]).sqrt();
                assert!(gram[(i, j)].abs() < 1e-10 * scale, "({i},{j})");
            }
        }
        // orthogonal to the constant as well
        for j in 0..b.p() {
            let s: f64 = b.columns().column(j).sum();
            assert!(s.abs() < 1e-10 * gram[(j, j)].sqrt());
        }
        assert!(b.orthogonal_gram().is_some());
    }

    #[test]
    fn aliasing_guard() {
        let g = make_grid(16).unwrap();
        assert!(fourier_basis(&g, 8).is_err());
        assert!(fourier_basis(&g, 0).is_err());
        assert!(fourier_basis(&g, 7).is_ok());
    }

    #[test]
    fn penalty_grows_with_frequency() {
        let g = make_grid(12).unwrap();
        let b = fourier_basis_with_order(&g, 5, 2).unwrap();
        for w in b.freq().windows(2) {
            assert!(w[0] <= w[1]);
        }
        for (f, p) in b.freq().iter().zip(b.penalty()) {
            assert_eq!(*p, (*f as f64).powi(4));
        }
    }

    #[test]
    fn restriction() {
        let g = make_grid(12).unwrap();
        let b = fourier_basis(&g, 5).unwrap();
        assert_eq!(restrict_low_frequency(&b, 5).unwrap(), b);
        let low = restrict_low_frequency(&b, 2).unwrap();
        assert!(low.freq().iter().all(|&f| f <= 2));
        assert_eq!(low.p(), 24);
        assert!(low.orthogonal_gram().is_some());
        assert!(restrict_low_frequency(&b, 0).is_err());
        assert!(restrict_low_frequency(&b, 6).is_err());
    }

    #[test]
    fn disjoint_band_field_projects_to_nothing() {
        let g = make_grid(16).unwrap();
        let b = restrict_low_frequency(&fourier_basis(&g, 5).unwrap(), 2).unwrap();
        let f = sample_grf(&g, &SpectralSpec::new(4, 5, 0.0, 1.0), 12).unwrap();
        let ratio = residual_ratio(&b, &f.values, false);
        assert!((ratio - 1.0).abs() < 1e-10, "projection leaked: {ratio}");
    }

    #[test]
    fn band_limited_fields_lie_in_span() {
        let g = make_grid(16).unwrap();
        let b = fourier_basis(&g, 6).unwrap();
        let f = sample_grf(&g, &SpectralSpec::new(0, 6, 1.0, 1.0), 3).unwrap();
        assert!(residual_ratio(&b, &f.values, true) < 1e-9);
    }

    #[test]
    fn permuted_grid_keeps_orthogonality() {
        let g = make_grid(10).unwrap();
        let perm: Vec<usize> = (0..100).map(|i| (i * 37) % 100).collect();
        let pg = g.permuted(&perm);
        let a = fourier_basis(&pg, 3).unwrap();
        let b = fourier_basis(&g, 3).unwrap().permuted_rows(&perm);
        assert!(a.orthogonal_gram().is_some());
        assert!((a.columns() - b.columns()).amax() < 1e-12);
    }

    #[test]
    fn from_columns_detects_non_orthogonal() {
        let cols = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let b = BasisSet::from_columns(cols, vec![1, 1], vec![1.0, 1.0]).unwrap();
        assert!(b.orthogonal_gram().is_none());
        assert!(BasisSet::from_columns(DMatrix::zeros(3, 2), vec![1], vec![1.0, 1.0]).is_err());
    }
}
