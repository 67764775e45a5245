//! Spatial domain and random fields.
//!
//! The domain is the unit square sampled on a regular `m x m` grid of cell
//! centers. Completely spatial fields are band-limited Fourier syntheses;
//! independent fields are iid normal draws.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

pub const MAX_GRID: usize = 512;

/// Regular grid of cell centers on `[0,1]^2`, row-major with `x` varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationGrid {
    m: usize,
    coords: Vec<[f64; 2]>,
}

impl LocationGrid {
    /// Wrap an explicit coordinate list (for example a row-permuted grid or one
    /// read back from CSV). Requires `coords.len() == m * m`.
    pub fn from_coords(m: usize, coords: Vec<[f64; 2]>) -> Result<Self> {
        if !(2..=MAX_GRID).contains(&m) {
            return Err(Error::InvalidArgument(format!(
                "grid size m = {m} outside [2, {MAX_GRID}]"
            )));
        }
        if coords.len() != m * m {
            return Err(Error::Dimension(format!(
                "{} coordinates for an m = {m} grid (expected {})",
                coords.len(),
                m * m
            )));
        }
        if coords
            .iter()
            .any(|c| !(c[0] > 0.0 && c[0] < 1.0 && c[1] > 0.0 && c[1] < 1.0))
        {
            return Err(Error::InvalidArgument(
                "grid coordinates must lie strictly inside the unit square".into(),
            ));
        }
        Ok(Self { m, coords })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    /// Reorder points: `out[i] = self[perm[i]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            m: self.m,
            coords: perm.iter().map(|&i| self.coords[i]).collect(),
        }
    }

    /// Integer cell index `(i, j)` of each point, recovered from its coordinates.
    pub(crate) fn cell_indices(&self) -> Vec<(usize, usize)> {
        let m = self.m as f64;
        self.coords
            .iter()
            .map(|c| {
                let i = (c[0] * m - 0.5).round().clamp(0.0, m - 1.0) as usize;
                let j = (c[1] * m - 0.5).round().clamp(0.0, m - 1.0) as usize;
                (i, j)
            })
            .collect()
    }
}

/// Build the `m x m` grid of cell centers `((i + 0.5)/m, (j + 0.5)/m)`.
pub fn make_grid(m: usize) -> Result<LocationGrid> {
    if !(2..=MAX_GRID).contains(&m) {
        return Err(Error::InvalidArgument(format!(
            "grid size m = {m} outside [2, {MAX_GRID}]"
        )));
    }
    let mf = m as f64;
    let mut coords = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            coords.push([(i as f64 + 0.5) / mf, (j as f64 + 0.5) / mf]);
        }
    }
    Ok(LocationGrid { m, coords })
}

/// Frequency band and amplitude profile of a band-limited field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSpec {
    pub k_min: usize,
    pub k_max: usize,
    #[serde(default)]
    pub decay: f64,
    pub variance: f64,
}

impl SpectralSpec {
    pub fn new(k_min: usize, k_max: usize, decay: f64, variance: f64) -> Self {
        Self {
            k_min,
            k_max,
            decay,
            variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_min > self.k_max {
            return Err(Error::InvalidArgument(format!(
                "k_min = {} exceeds k_max = {}",
                self.k_min, self.k_max
            )));
        }
        if !(self.variance.is_finite() && self.variance >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "variance must be finite and >= 0, got {}",
                self.variance
            )));
        }
        if !(self.decay.is_finite() && self.decay >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "decay must be finite and >= 0, got {}",
                self.decay
            )));
        }
        Ok(())
    }
}

/// How a field is generated: band-limited spatial synthesis or iid noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FieldSpec {
    Spectral {
        k_min: usize,
        k_max: usize,
        #[serde(default)]
        decay: f64,
        variance: f64,
    },
    Iid {
        sd: f64,
    },
}

impl FieldSpec {
    pub fn spectral(s: SpectralSpec) -> Self {
        FieldSpec::Spectral {
            k_min: s.k_min,
            k_max: s.k_max,
            decay: s.decay,
            variance: s.variance,
        }
    }

    /// Marginal variance of a draw from this spec.
    pub fn variance(&self) -> f64 {
        match *self {
            FieldSpec::Spectral { variance, .. } => variance,
            FieldSpec::Iid { sd } => sd * sd,
        }
    }

    pub fn as_spectral(&self) -> Option<SpectralSpec> {
        match *self {
            FieldSpec::Spectral {
                k_min,
                k_max,
                decay,
                variance,
            } => Some(SpectralSpec::new(k_min, k_max, decay, variance)),
            FieldSpec::Iid { .. } => None,
        }
    }

    pub fn sample(&self, grid: &LocationGrid, seed: u64) -> Result<FieldSample> {
        match self.as_spectral() {
            Some(s) => sample_grf(grid, &s, seed),
            None => match *self {
                FieldSpec::Iid { sd } => sample_iid(grid, sd, seed),
                FieldSpec::Spectral { .. } => unreachable!(),
            },
        }
    }
}

/// One realization of a field on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub values: Vec<f64>,
    pub spec: FieldSpec,
    pub seed: u64,
}

/// Canonical half-lattice of integer frequency pairs with
/// `k_min <= |k|_inf <= k_max`, one representative per `{k, -k}` pair.
///
/// Ordered by `|k|_inf`, then `k2`, then `k1`. The zero frequency is included
/// only when `k_min == 0`.
pub fn half_lattice(k_min: usize, k_max: usize) -> Vec<(i64, i64)> {
    let kmax = k_max as i64;
    let mut out = Vec::new();
    for shell in k_min as i64..=kmax {
        let mut ring = Vec::new();
        for k2 in 0..=shell {
            for k1 in -shell..=shell {
                if k1.abs().max(k2) != shell {
                    continue;
                }
                if k2 == 0 && k1 < 0 {
                    continue;
                }
                ring.push((k1, k2));
            }
        }
        out.extend(ring);
    }
    out
}

/// Per-point complex exponentials `e^{2 pi i k x}` for `k in -K..=K` and
/// `e^{2 pi i k y}` for `k in 0..=K`.
pub(crate) struct PhaseTable {
    k_max: i64,
    ex: Vec<Complex64>,
    ey: Vec<Complex64>,
}

impl PhaseTable {
    pub(crate) fn new(k_max: usize) -> Self {
        Self {
            k_max: k_max as i64,
            ex: vec![Complex64::new(0.0, 0.0); 2 * k_max + 1],
            ey: vec![Complex64::new(0.0, 0.0); k_max + 1],
        }
    }

    pub(crate) fn fill(&mut self, point: [f64; 2]) {
        let k = self.k_max;
        for k1 in -k..=k {
            let a = 2.0 * PI * (k1 as f64) * point[0];
            self.ex[(k1 + k) as usize] = Complex64::new(a.cos(), a.sin());
        }
        for k2 in 0..=k {
            let a = 2.0 * PI * (k2 as f64) * point[1];
            self.ey[k2 as usize] = Complex64::new(a.cos(), a.sin());
        }
    }

    /// `(cos, sin)` of `2 pi (k1 x + k2 y)` at the filled point.
    #[inline]
    pub(crate) fn cos_sin(&self, k: (i64, i64)) -> (f64, f64) {
        let z = self.ex[(k.0 + self.k_max) as usize] * self.ey[k.1 as usize];
        (z.re, z.im)
    }
}

fn population_variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Sample a band-limited (completely spatial) random field.
///
/// Each half-lattice frequency `k` in the band contributes
/// `a_k cos(2 pi k.s) + b_k sin(2 pi k.s)` with `a_k, b_k ~ N(0, 1)` scaled by
/// `max(|k|_inf, 1)^(-decay)`. The sum is rescaled so that the grid variance
/// (divisor `n`) equals `spec.variance`.
pub fn sample_grf(grid: &LocationGrid, spec: &SpectralSpec, seed: u64) -> Result<FieldSample> {
    spec.validate()?;
    let half = grid.m() / 2;
    if spec.k_max > half {
        return Err(Error::Aliasing {
            k_max: spec.k_max,
            m: grid.m(),
            half,
        });
    }
    let field_spec = FieldSpec::spectral(*spec);
    if spec.variance == 0.0 {
        return Ok(FieldSample {
            values: vec![0.0; grid.n()],
            spec: field_spec,
            seed,
        });
    }

    let lattice = half_lattice(spec.k_min, spec.k_max);
    let mut rng = rng_from_seed(seed);
    let coefs: Vec<(f64, f64)> = lattice
        .iter()
        .map(|&(k1, k2)| {
            let scale = (k1.abs().max(k2).max(1) as f64).powf(-spec.decay);
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            (a * scale, b * scale)
        })
        .collect();

    let mut table = PhaseTable::new(spec.k_max);
    let mut values = Vec::with_capacity(grid.n());
    for &p in grid.coords() {
        table.fill(p);
        let mut v = 0.0;
        for (&k, &(a, b)) in lattice.iter().zip(&coefs) {
            let (c, s) = table.cos_sin(k);
            v += a * c + b * s;
        }
        values.push(v);
    }

    let var = population_variance(&values);
    if var > 0.0 {
        let scale = (spec.variance / var).sqrt();
        for v in &mut values {
            *v *= scale;
        }
    }
    Ok(FieldSample {
        values,
        spec: field_spec,
        seed,
    })
}

/// Sample `n` independent `N(0, sd^2)` values.
pub fn sample_iid(grid: &LocationGrid, sd: f64, seed: u64) -> Result<FieldSample> {
    if !(sd.is_finite() && sd >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "standard deviation must be finite and >= 0, got {sd}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let values = (0..grid.n())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect();
    Ok(FieldSample {
        values,
        spec: FieldSpec::Iid { sd },
        seed,
    })
}

/// Energy per `|k|_inf` shell of the 2-D DFT of `values` laid out on `grid`.
///
/// Normalized so the shell energies sum to `sum(values^2)` (Parseval).
pub fn field_dft_energy(values: &[f64], grid: &LocationGrid) -> Result<BTreeMap<usize, f64>> {
    let m = grid.m();
    if values.len() != grid.n() {
        return Err(Error::InvalidArgument(format!(
            "field length {} does not match grid size {}",
            values.len(),
            grid.n()
        )));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
    for (&(i, j), &v) in grid.cell_indices().iter().zip(values) {
        buf[j * m + i] = Complex64::new(v, 0.0);
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    // rows (x direction)
    for row in buf.chunks_mut(m) {
        fft.process(row);
    }
    // columns (y direction)
    let mut col = vec![Complex64::new(0.0, 0.0); m];
    for i in 0..m {
        for j in 0..m {
            col[j] = buf[j * m + i];
        }
        fft.process(&mut col);
        for j in 0..m {
            buf[j * m + i] = col[j];
        }
    }
    let fold = |u: usize| -> usize { u.min(m - u) };
    let n = (m * m) as f64;
    let mut shells = BTreeMap::new();
    for shell in 0..=m / 2 {
        shells.insert(shell, 0.0);
    }
    for j in 0..m {
        for i in 0..m {
            let shell = fold(i).max(fold(j));
            *shells.get_mut(&shell).unwrap() += buf[j * m + i].norm_sqr() / n;
        }
    }
    Ok(shells)
}

/// Write `x,y,value` rows in grid order.
pub fn write_field_csv<W: Write>(out: W, grid: &LocationGrid, values: &[f64]) -> Result<()> {
    if values.len() != grid.n() {
        return Err(Error::Dimension(format!(
            "field length {} does not match grid size {}",
            values.len(),
            grid.n()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "value"])?;
    for (c, v) in grid.coords().iter().zip(values) {
        w.write_record([c[0].to_string(), c[1].to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
