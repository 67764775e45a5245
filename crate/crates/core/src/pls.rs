//! Penalized least squares with a diagonal penalty on the spatial basis block:
//!
//! ```text
//! minimize |y - F a - B g|^2 + lambda * g' diag(penalty) g
//! ```
//!
//! `F` is the unpenalized fixed design (intercept, exposure, covariates) and
//! `B` the spatial basis. When the basis columns are mutually orthogonal the
//! basis block is eliminated in closed form and each `lambda` costs
//! `O(n q + p q^2)`; otherwise the full normal equations are factorized.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::basis::BasisSet;
use crate::error::{Error, Result};

/// Reciprocal-condition threshold below which a design counts as collinear.
pub const COLLINEARITY_RCOND: f64 = 1e-10;

/// Default smoothing grid: `{0} U logspace(1e-4, 1e6, 41)`.
pub fn default_lambda_grid() -> Vec<f64> {
    let mut grid = vec![0.0];
    grid.extend((0..41).map(|i| 10f64.powf(-4.0 + 10.0 * i as f64 / 40.0)));
    grid
}

/// Unpenalized design columns with names (used in diagnostics).
#[derive(Debug, Clone, PartialEq)]
pub struct FixedDesign {
    matrix: DMatrix<f64>,
    names: Vec<String>,
}

impl FixedDesign {
    pub fn new(matrix: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if matrix.ncols() != names.len() {
            return Err(Error::Dimension(format!(
                "{} fixed columns but {} names",
                matrix.ncols(),
                names.len()
            )));
        }
        Ok(Self { matrix, names })
    }

    /// Build from named columns; an intercept is *not* added implicitly.
    pub fn from_columns(cols: &[(&str, &[f64])]) -> Result<Self> {
        let n = cols.first().map_or(0, |c| c.1.len());
        if cols.iter().any(|c| c.1.len() != n) {
            return Err(Error::Dimension("fixed columns differ in length".into()));
        }
        let matrix = DMatrix::from_fn(n, cols.len(), |i, j| cols[j].1[i]);
        Self::new(matrix, cols.iter().map(|c| c.0.to_string()).collect())
    }

    /// Intercept column followed by the given named columns.
    pub fn with_intercept(n: usize, cols: &[(&str, &[f64])]) -> Result<Self> {
        let ones = vec![1.0; n];
        let mut all: Vec<(&str, &[f64])> = vec![("intercept", &ones)];
        all.extend_from_slice(cols);
        Self::from_columns(&all)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn q(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub fixed_names: Vec<String>,
    pub fixed_coefs: Vec<f64>,
    pub basis_coefs: Vec<f64>,
    /// `f64::INFINITY` means the basis was shrunk away entirely.
    pub lambda: f64,
    pub edf: f64,
    pub rss: f64,
    pub gcv: f64,
    pub aic: f64,
    pub sigma2_hat: f64,
    pub cov_fixed: DMatrix<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Reciprocal condition of the column-normalized fixed block of the
    /// penalized normal equations after eliminating the basis.
    pub rcond: f64,
}

impl FitResult {
    pub fn coef(&self, name: &str) -> Option<f64> {
        let i = self.fixed_names.iter().position(|n| n == name)?;
        Some(self.fixed_coefs[i])
    }

    pub fn se(&self, name: &str) -> Option<f64> {
        let i = self.fixed_names.iter().position(|n| n == name)?;
        Some(self.cov_fixed[(i, i)].max(0.0).sqrt())
    }
}

/// Reciprocal condition number of the column-normalized symmetric matrix and
/// the eigenvector of its smallest eigenvalue.
fn normalized_rcond(gram: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let k = gram.nrows();
    if k == 0 {
        return (1.0, DVector::zeros(0));
    }
    let scale: Vec<f64> = (0..k)
        .map(|i| {
            let d = gram[(i, i)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    if scale.contains(&0.0) {
        let mut v = DVector::zeros(k);
        let i = scale.iter().position(|&s| s == 0.0).unwrap();
        v[i] = 1.0;
        return (0.0, v);
    }
    let normed = DMatrix::from_fn(k, k, |i, j| gram[(i, j)] * scale[i] * scale[j]);
    let eig = SymmetricEigen::new(normed);
    let (imin, &lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let lmax = eig.eigenvalues.iter().copied().fold(f64::MIN, f64::max);
    let rcond = if lmax > 0.0 {
        (lmin / lmax).max(0.0)
    } else {
        0.0
    };
    (rcond, eig.eigenvectors.column(imin).into_owned())
}

fn offending(names: &[String], v: &DVector<f64>) -> Vec<String> {
    let vmax = v.amax();
    names
        .iter()
        .zip(v.iter())
        .filter(|(_, x)| x.abs() > 0.1 * vmax)
        .map(|(n, _)| n.clone())
        .collect()
}

fn cholesky_inverse(a: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let ch = a
        .cholesky()
        .ok_or_else(|| Error::Solve(format!("{what} is not positive definite")))?;
    Ok(ch.inverse())
}

/// Solution at one smoothing parameter, without the `n`-length vectors.
#[derive(Debug, Clone)]
pub struct Solution {
    pub lambda: f64,
    pub alpha: DVector<f64>,
    pub gamma: DVector<f64>,
    pub rss: f64,
    pub edf: f64,
    pub gcv: f64,
    pub aic: f64,
    pub sigma2_hat: f64,
    /// Fixed block of the inverse penalized normal matrix.
    pub fixed_inverse: DMatrix<f64>,
    pub rcond: f64,
}

enum Kernel {
    /// Basis columns mutually orthogonal; the basis block is diagonal.
    Orthogonal {
        d: DVector<f64>,
        /// `B' F`, p x q.
        w: DMatrix<f64>,
        /// `B' y`.
        by: DVector<f64>,
        /// `(I - P_B) F`.
        f_til: DMatrix<f64>,
        /// `(I - P_B) y`.
        y_til: DVector<f64>,
        g0: DMatrix<f64>,
        r0: DVector<f64>,
    },
    Dense {
        gram: DMatrix<f64>,
        xty: DVector<f64>,
    },
}

/// A prepared penalized regression problem; [`PlsProblem::solve`] evaluates
/// one smoothing parameter.
pub struct PlsProblem<'a> {
    y: DVector<f64>,
    fixed: &'a FixedDesign,
    basis: &'a BasisSet,
    ftf: DMatrix<f64>,
    fty: DVector<f64>,
    kernel: Kernel,
}

impl<'a> PlsProblem<'a> {
    pub fn new(y: &[f64], fixed: &'a FixedDesign, basis: &'a BasisSet) -> Result<Self> {
        let n = y.len();
        if fixed.n() != n || basis.n() != n {
            return Err(Error::Dimension(format!(
                "response has {n} rows, fixed design {}, basis {}",
                fixed.n(),
                basis.n()
            )));
        }
        if fixed.q() == 0 {
            return Err(Error::InvalidArgument("fixed design has no columns".into()));
        }
        let f = fixed.matrix();
        let yv = DVector::from_column_slice(y);
        let ftf = f.tr_mul(f);
        let (rcond, v) = normalized_rcond(&ftf);
        if rcond < COLLINEARITY_RCOND {
            return Err(Error::RankDeficient {
                columns: offending(fixed.names(), &v),
                rcond,
            });
        }
        let fty = f.tr_mul(&yv);
        let b = basis.columns();
        let kernel = match basis.orthogonal_gram() {
            Some(d) => {
                let d = DVector::from_column_slice(d);
                let w = b.tr_mul(f);
                let by = b.tr_mul(&yv);
                let mut w_scaled = w.clone();
                let mut by_scaled = by.clone();
                for j in 0..d.len() {
                    w_scaled.row_mut(j).scale_mut(1.0 / d[j]);
                    by_scaled[j] /= d[j];
                }
                let f_til = f - b * &w_scaled;
                let y_til = &yv - b * &by_scaled;
                let g0 = f_til.tr_mul(&f_til);
                let r0 = f_til.tr_mul(&y_til);
                Kernel::Orthogonal {
                    d,
                    w,
                    by,
                    f_til,
                    y_til,
                    g0,
                    r0,
                }
            }
            None => {
                let x = concat(f, b);
                Kernel::Dense {
                    gram: x.tr_mul(&x),
                    xty: x.tr_mul(&yv),
                }
            }
        };
        Ok(Self {
            y: yv,
            fixed,
            basis,
            ftf,
            fty,
            kernel,
        })
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    fn criteria(&self, rss: f64, edf: f64) -> (f64, f64, f64) {
        let n = self.n() as f64;
        let resid_df = n - edf;
        let (gcv, sigma2) = if resid_df > 1e-8 {
            (n * rss / (resid_df * resid_df), rss / resid_df)
        } else {
            (f64::INFINITY, f64::NAN)
        };
        let aic = n * (rss / n).ln() + 2.0 * edf;
        (gcv, aic, sigma2)
    }

    fn collinear(&self, gram: &DMatrix<f64>, names: &[String]) -> Result<f64> {
        let (rcond, v) = normalized_rcond(gram);
        if rcond < COLLINEARITY_RCOND {
            return Err(Error::Collinear {
                columns: offending(names, &v),
                rcond,
            });
        }
        Ok(rcond)
    }

    /// Fit with the basis shrunk to zero: ordinary least squares on `F`.
    fn solve_infinite(&self) -> Result<Solution> {
        let q = self.fixed.q();
        let p = self.basis.p();
        let inv = cholesky_inverse(self.ftf.clone(), "fixed Gram matrix")?;
        let alpha = &inv * &self.fty;
        let resid = &self.y - self.fixed.matrix() * &alpha;
        let rss = resid.norm_squared();
        let edf = q as f64;
        let (gcv, aic, sigma2_hat) = self.criteria(rss, edf);
        let (rcond, _) = normalized_rcond(&self.ftf);
        Ok(Solution {
            lambda: f64::INFINITY,
            alpha,
            gamma: DVector::zeros(p),
            rss,
            edf,
            gcv,
            aic,
            sigma2_hat,
            fixed_inverse: inv,
            rcond,
        })
    }

    pub fn solve(&self, lambda: f64) -> Result<Solution> {
        if lambda.is_nan() || lambda < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        if lambda.is_infinite() {
            return self.solve_infinite();
        }
        let q = self.fixed.q();
        let penalty = self.basis.penalty();
        match &self.kernel {
            Kernel::Orthogonal {
                d,
                w,
                by,
                f_til,
                y_til,
                g0,
                r0,
            } => {
                let p = d.len();
                // Schur complement S = F'(I - B M^-1 B')F written as a sum of
                // PSD terms: G0 + sum_j c_j w_j w_j', c_j = 1/d_j - 1/M_j.
                let mut schur = g0.clone();
                let mut rhs = r0.clone();
                let mut k_mat = DMatrix::zeros(q, q);
                let mut trace_part = 0.0;
                let m_diag: Vec<f64> = (0..p).map(|j| d[j] + lambda * penalty[j]).collect();
                for j in 0..p {
                    let mj = m_diag[j];
                    trace_part += d[j] / mj;
                    let lam_s = lambda * penalty[j];
                    if lam_s == 0.0 {
                        continue;
                    }
                    let c = lam_s / (d[j] * mj);
                    let kc = lam_s / (mj * mj);
                    let wj = w.row(j);
                    for a in 0..q {
                        rhs[a] += c * wj[a] * by[j];
                        for b in 0..q {
                            let prod = wj[a] * wj[b];
                            schur[(a, b)] += c * prod;
                            k_mat[(a, b)] += kc * prod;
                        }
                    }
                }
                let rcond = if lambda == 0.0 {
                    self.collinear(g0, self.fixed.names())?
                } else {
                    normalized_rcond(&schur).0
                };
                let inv = cholesky_inverse(schur, "penalized normal matrix")?;
                let alpha = &inv * &rhs;
                let mut gamma = DVector::zeros(p);
                let mut rss_b = 0.0;
                let wa = w * &alpha;
                for j in 0..p {
                    let t = by[j] - wa[j];
                    gamma[j] = t / m_diag[j];
                    let u = t / d[j];
                    rss_b += d[j] * (u - gamma[j]).powi(2);
                }
                let r = y_til - f_til * &alpha;
                let rss = r.norm_squared() + rss_b;
                let edf = q as f64 + trace_part - (&inv * &k_mat).trace();
                let (gcv, aic, sigma2_hat) = self.criteria(rss, edf);
                Ok(Solution {
                    lambda,
                    alpha,
                    gamma,
                    rss,
                    edf,
                    gcv,
                    aic,
                    sigma2_hat,
                    fixed_inverse: inv,
                    rcond,
                })
            }
            Kernel::Dense { gram, xty } => {
                let p = self.basis.p();
                let mut a = gram.clone();
                for j in 0..p {
                    a[(q + j, q + j)] += lambda * penalty[j];
                }
                let names: Vec<String> = self
                    .fixed
                    .names()
                    .iter()
                    .cloned()
                    .chain((0..p).map(|j| format!("basis[{j}]")))
                    .collect();
                let rcond = if lambda == 0.0 {
                    self.collinear(&a, &names)?
                } else {
                    normalized_rcond(&a).0
                };
                let inv = cholesky_inverse(a, "penalized normal matrix")?;
                let coef = &inv * xty;
                let alpha = coef.rows(0, q).into_owned();
                let gamma = coef.rows(q, p).into_owned();
                let fitted = self.fixed.matrix() * &alpha + self.basis.columns() * &gamma;
                let rss = (&self.y - fitted).norm_squared();
                let edf = (&inv * gram).trace();
                let (gcv, aic, sigma2_hat) = self.criteria(rss, edf);
                Ok(Solution {
                    lambda,
                    alpha,
                    gamma,
                    rss,
                    edf,
                    gcv,
                    aic,
                    sigma2_hat,
                    fixed_inverse: inv.view((0, 0), (q, q)).into_owned(),
                    rcond,
                })
            }
        }
    }

    /// Materialize fitted values, residuals and covariance for a solution.
    pub fn finish(&self, s: Solution) -> FitResult {
        let fitted = self.fixed.matrix() * &s.alpha + self.basis.columns() * &s.gamma;
        let residuals: Vec<f64> = self
            .y
            .iter()
            .zip(fitted.iter())
            .map(|(y, f)| y - f)
            .collect();
        FitResult {
            fixed_names: self.fixed.names().to_vec(),
            fixed_coefs: s.alpha.iter().copied().collect(),
            basis_coefs: s.gamma.iter().copied().collect(),
            lambda: s.lambda,
            edf: s.edf,
            rss: s.rss,
            gcv: s.gcv,
            aic: s.aic,
            sigma2_hat: s.sigma2_hat,
            cov_fixed: s.fixed_inverse * s.sigma2_hat,
            fitted: fitted.iter().copied().collect(),
            residuals,
            rcond: s.rcond,
        }
    }

    /// Solve every grid value; return the GCV minimizer (ties go to the
    /// smallest lambda).
    pub fn select_gcv(&self, grid: &[f64]) -> Result<Solution> {
        validate_grid(grid)?;
        let mut order: Vec<f64> = grid.to_vec();
        order.sort_by(|a, b| a.total_cmp(b));
        let mut best: Option<Solution> = None;
        for &lambda in &order {
            let s = self.solve(lambda)?;
            if best.as_ref().is_none_or(|b| s.gcv < b.gcv) {
                best = Some(s);
            }
        }
        Ok(best.expect("grid is nonempty"))
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    if grid.iter().any(|l| l.is_nan() || *l < 0.0) {
        return Err(Error::InvalidArgument(
            "lambda grid values must be >= 0".into(),
        ));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument(
            "lambda grid values must be distinct".into(),
        ));
    }
    Ok(())
}

fn concat(f: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let q = f.ncols();
    DMatrix::from_fn(f.nrows(), q + b.ncols(), |i, j| {
        if j < q {
            f[(i, j)]
        } else {
            b[(i, j - q)]
        }
    })
}

/// Penalized least-squares fit at a fixed `lambda` (`f64::INFINITY` allowed).
pub fn fit_pls(y: &[f64], fixed: &FixedDesign, b: &BasisSet, lambda: f64) -> Result<FitResult> {
    let problem = PlsProblem::new(y, fixed, b)?;
    let s = problem.solve(lambda)?;
    Ok(problem.finish(s))
}

/// Fit every `lambda` in the grid and return the fit with the smallest GCV.
pub fn select_lambda_gcv(
    y: &[f64],
    fixed: &FixedDesign,
    b: &BasisSet,
    lambda_grid: &[f64],
) -> Result<FitResult> {
    let problem = PlsProblem::new(y, fixed, b)?;
    let s = problem.select_gcv(lambda_grid)?;
    Ok(problem.finish(s))
}

/// `|y - F a - B g|^2 + lambda g' diag(penalty) g`.
pub fn penalized_objective(
    y: &[f64],
    fixed: &FixedDesign,
    b: &BasisSet,
    lambda: f64,
    alpha: &[f64],
    gamma: &[f64],
) -> f64 {
    let a = DVector::from_column_slice(alpha);
    let g = DVector::from_column_slice(gamma);
    let fitted = fixed.matrix() * a + b.columns() * &g;
    let rss: f64 = y
        .iter()
        .zip(fitted.iter())
        .map(|(y, f)| (y - f).powi(2))
        .sum();
    let pen: f64 = if lambda == 0.0 {
        0.0
    } else {
        g.iter()
            .zip(b.penalty())
            .map(|(g, s)| s * g * g)
            .sum::<f64>()
            * lambda
    };
    rss + pen
}

/// `(I - P) v` for each column of `v`, where `P` projects onto `col(onto)`.
pub fn project_out(v: &DMatrix<f64>, onto: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if v.nrows() != onto.nrows() {
        return Err(Error::Dimension(format!(
            "{} rows to project against {} rows",
            v.nrows(),
            onto.nrows()
        )));
    }
    if onto.ncols() == 0 {
        return Ok(v.clone());
    }
    let gram = onto.tr_mul(onto);
    let (rcond, vec) = normalized_rcond(&gram);
    if rcond < COLLINEARITY_RCOND {
        let names: Vec<String> = (0..onto.ncols()).map(|j| format!("onto[{j}]")).collect();
        return Err(Error::RankDeficient {
            columns: offending(&names, &vec),
            rcond,
        });
    }
    let qr = onto.clone().qr();
    let q = qr.q();
    let mut out = v - &q * q.tr_mul(v);
    // second pass removes the rounding residue of the first
    out -= &q * q.tr_mul(&out);
    Ok(out)
}

/// Vector convenience wrapper around [`project_out`].
pub fn project_out_vec(v: &[f64], onto: &DMatrix<f64>) -> Result<Vec<f64>> {
    let m = DMatrix::from_column_slice(v.len(), 1, v);
    Ok(project_out(&m, onto)?.column(0).iter().copied().collect())
}
