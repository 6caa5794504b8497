//! Profile estimation of the linear coefficients.
//!
//! Both estimators residualize `Y` and every column of `X` on `Z` and regress
//! `Y~` on `X~` by least squares with an intercept. [`sam_fit`] uses additive
//! smooth backfitting fits; [`pl_fit`] uses a full-dimensional product-kernel
//! smoother and ignores the additive structure.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{Grid, ProductSmoother};
use crate::linalg::{eigen_range, gram, inverse_spd};
use crate::sbf::{build_projection, sbf_multi_named, AdditiveFit, SbfConfig};

/// Condition-number ceiling for the residualized Gram matrix.
pub const GRAM_CONDITION_LIMIT: f64 = 1e10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EstimatorTag {
    Sam,
    Pl,
    Asam,
}

impl std::fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorTag::Sam => "SAM",
            EstimatorTag::Pl => "PL",
            EstimatorTag::Asam => "ASAM",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NonparametricPart {
    /// `m(.; beta)` as an additive fit.
    Additive(AdditiveFit),
    /// Full-dimensional smooth of `Y - X'beta` along the diagonal
    /// `z_1 = ... = z_d`, for reporting only (NaN where the window is empty).
    Diagonal { grid: Grid, values: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct PlamFit {
    pub estimator: EstimatorTag,
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub nonparametric: NonparametricPart,
    /// `Y - Y^`, mean zero by construction.
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    /// `RSS / (n - p)`.
    pub sigma2: f64,
    pub cov_beta: DMatrix<f64>,
    pub x_tilde: Array2<f64>,
    pub y_tilde: Vec<f64>,
    pub gram_condition: f64,
    /// Backfitting fits of `Y` and of each column of `X` (SAM only).
    pub response_fits: Vec<AdditiveFit>,
}

impl PlamFit {
    pub fn additive(&self) -> Option<&AdditiveFit> {
        match &self.nonparametric {
            NonparametricPart::Additive(fit) => Some(fit),
            NonparametricPart::Diagonal { .. } => None,
        }
    }

    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }
}

struct LeastSquares {
    beta: Vec<f64>,
    shift: f64,
    residuals: Vec<f64>,
    sigma2: f64,
    cov: DMatrix<f64>,
    condition: f64,
}

/// Least squares of `y_tilde` on `x_tilde` with an intercept. `x_raw` sets
/// the scale below which residualized columns count as explained by `Z`.
fn profile_least_squares(y_tilde: &[f64], x_tilde: ArrayView2<f64>, x_raw: ArrayView2<f64>) -> Result<LeastSquares> {
    let (n, p) = x_tilde.dim();
    let g = gram(x_tilde, true);
    let (lo, hi) = eigen_range(&g);
    let reference = (0..p)
        .map(|j| x_raw.column(j).iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    let condition = hi / lo;
    if !(lo > 1e-10 * reference.max(hi)) || !(condition < GRAM_CONDITION_LIMIT) {
        return Err(Error::Concurvity {
            smallest_eigenvalue: lo,
            condition_number: if lo > 0.0 { condition } else { f64::INFINITY },
        });
    }
    let ybar = y_tilde.iter().sum::<f64>() / n as f64;
    let xbar: Vec<f64> = (0..p).map(|j| x_tilde.column(j).sum() / n as f64).collect();
    let mut xty = DVector::<f64>::zeros(p);
    for (i, row) in x_tilde.outer_iter().enumerate() {
        for j in 0..p {
            xty[j] += (row[j] - xbar[j]) * (y_tilde[i] - ybar);
        }
    }
    let beta_vec = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("residualized Gram matrix".into()))?
        .solve(&xty);
    let beta: Vec<f64> = beta_vec.iter().copied().collect();
    let raw: Vec<f64> = x_tilde
        .outer_iter()
        .zip(y_tilde)
        .map(|(row, y)| y - row.iter().zip(&beta).map(|(x, b)| x * b).sum::<f64>())
        .collect();
    let shift = raw.iter().sum::<f64>() / n as f64;
    let residuals: Vec<f64> = raw.iter().map(|r| r - shift).collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let sigma2 = rss / (n - p) as f64;
    let cov = inverse_spd(&g, "residualized Gram matrix")? * sigma2;
    Ok(LeastSquares {
        beta,
        shift,
        residuals,
        sigma2,
        cov,
        condition,
    })
}

fn response_matrix(data: &Dataset) -> Array2<f64> {
    let (n, p) = (data.n(), data.p());
    let mut cols = Array2::<f64>::zeros((n, p + 1));
    cols.column_mut(0).assign(&ndarray::ArrayView1::from(&data.y));
    cols.slice_mut(ndarray::s![.., 1..]).assign(&data.x);
    cols
}

/// Gaussian profile estimator with smooth backfitting residualization.
pub fn sam_fit(data: &Dataset, config: &SbfConfig) -> Result<PlamFit> {
    data.validate()?;
    let proj = build_projection(data.z.view(), config)?;
    let cols = response_matrix(data);
    let mut names = vec![data.y_name.clone()];
    names.extend(data.x_names.iter().cloned());
    let fits = sbf_multi_named(cols.view(), &names, &proj, config)?;

    let (n, p) = (data.n(), data.p());
    let mut tilde = cols.clone();
    for (c, fit) in fits.iter().enumerate() {
        let at_data = fit.evaluate_rows(data.z.view());
        for i in 0..n {
            tilde[[i, c]] -= at_data[i];
        }
    }
    let y_tilde: Vec<f64> = tilde.column(0).to_vec();
    let x_tilde = tilde.slice(ndarray::s![.., 1..]).to_owned();
    let ls = profile_least_squares(&y_tilde, x_tilde.view(), data.x.view())?;

    let x_fits: Vec<&AdditiveFit> = fits[1..].iter().collect();
    let neg_beta: Vec<f64> = ls.beta.iter().map(|b| -b).collect();
    let mut additive = fits[0].combine(&x_fits, &neg_beta);
    additive.m0 += ls.shift;
    let fitted: Vec<f64> = data.y.iter().zip(&ls.residuals).map(|(y, r)| y - r).collect();
    debug_assert_eq!(fitted.len(), n);
    debug_assert_eq!(x_tilde.ncols(), p);
    Ok(PlamFit {
        estimator: EstimatorTag::Sam,
        beta: ls.beta,
        intercept: additive.m0,
        nonparametric: NonparametricPart::Additive(additive),
        residuals: ls.residuals,
        fitted,
        sigma2: ls.sigma2,
        cov_beta: ls.cov,
        x_tilde,
        y_tilde,
        gram_condition: ls.condition,
        response_fits: fits,
    })
}

/// Partially linear comparator with full-dimensional kernel residualization.
pub fn pl_fit(data: &Dataset, config: &SbfConfig) -> Result<PlamFit> {
    data.validate()?;
    config.validate()?;
    let grid = config.grid()?;
    let smoother = ProductSmoother::new(data.z.view(), &config.bandwidths, config.kernel, &grid)?;
    let (n, p) = (data.n(), data.p());
    let x_cols: Vec<Vec<f64>> = (0..p).map(|j| data.x.column(j).to_vec()).collect();
    let mut columns: Vec<&[f64]> = vec![&data.y];
    columns.extend(x_cols.iter().map(Vec::as_slice));
    let smooth = smoother.smooth_at_data(&columns)?;
    if !smooth.isolated_rows.is_empty() {
        return Err(Error::DegenerateRows {
            rows: smooth.isolated_rows,
        });
    }
    let y_tilde: Vec<f64> = data.y.iter().zip(&smooth.values[0]).map(|(y, m)| y - m).collect();
    let x_tilde = Array2::from_shape_fn((n, p), |(i, j)| data.x[[i, j]] - smooth.values[j + 1][i]);
    let ls = profile_least_squares(&y_tilde, x_tilde.view(), data.x.view())?;

    let partial: Vec<f64> = (0..n)
        .map(|i| data.y[i] - (0..p).map(|j| data.x[[i, j]] * ls.beta[j]).sum::<f64>())
        .collect();
    let diagonal_points = Array2::from_shape_fn((grid.len(), data.d()), |(g, _)| grid.points()[g]);
    let diagonal = smoother.smooth_lenient(&[&partial], diagonal_points.view())?.remove(0);
    let intercept = partial.iter().sum::<f64>() / n as f64;
    let fitted: Vec<f64> = data.y.iter().zip(&ls.residuals).map(|(y, r)| y - r).collect();
    Ok(PlamFit {
        estimator: EstimatorTag::Pl,
        beta: ls.beta,
        intercept,
        nonparametric: NonparametricPart::Diagonal { grid, values: diagonal },
        residuals: ls.residuals,
        fitted,
        sigma2: ls.sigma2,
        cov_beta: ls.cov,
        x_tilde,
        y_tilde,
        gram_condition: ls.condition,
        response_fits: Vec::new(),
    })
}

pub fn standard_errors(fit: &PlamFit) -> Vec<f64> {
    standard_errors_of(&fit.cov_beta)
}

pub(crate) fn standard_errors_of(cov: &DMatrix<f64>) -> Vec<f64> {
    (0..cov.nrows()).map(|j| cov[(j, j)].max(0.0).sqrt()).collect()
}

/// `1 - sum (Y - Y^)^2 / sum (Y - Ybar)^2`.
pub fn generalized_r2(fit: &PlamFit, data: &Dataset) -> Result<f64> {
    r2_from_residuals(&data.y, &fit.residuals)
}

pub(crate) fn r2_from_residuals(y: &[f64], residuals: &[f64]) -> Result<f64> {
    if y.len() != residuals.len() {
        return Err(Error::DimensionMismatch("fit and data have different sizes".into()));
    }
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    if !(tss > 0.0) {
        return Err(Error::ZeroDenominator("response is constant".into()));
    }
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    Ok(1.0 - rss / tss)
}
