//! Adaptive one-step efficient estimation.
//!
//! Starting from the profile estimate, the error density is estimated from
//! the pseudo-errors by `g(t) = b + (n a)^-1 sum_i L((t - e_i)/a)`, the score
//! is symmetrized, `phi(e) = [(g'/g)(e) - (g'/g)(-e)] / 2`, and one Newton
//! step is taken: `beta~ = beta^ - I^-1 n^-1 sum_i X~_i phi(e_i)`.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::bandwidth::sj_bandwidth;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{BaseKernel, Bandwidths};
use crate::linalg::{eigen_range, gram, inverse_spd};
use crate::plam::{r2_from_residuals, sam_fit, EstimatorTag, PlamFit};
use crate::sbf::{AdditiveFit, SbfConfig};
use crate::stats::skewness;

pub const DEFAULT_SCORE_FLOOR: f64 = 0.01;
/// Gaussian tails beyond this many bandwidths are dropped from the sums.
const GAUSSIAN_CUTOFF: f64 = 12.0;
const SKEWNESS_WARNING: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreBandwidth {
    /// Sheather-Jones bandwidth of the pseudo-errors.
    Auto,
    Fixed(f64),
}

impl FromStr for ScoreBandwidth {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(ScoreBandwidth::Auto);
        }
        let a: f64 = s
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("score bandwidth must be 'auto' or a number, got {s:?}")))?;
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidArgument(format!("score bandwidth must be positive, got {a}")));
        }
        Ok(ScoreBandwidth::Fixed(a))
    }
}

impl std::fmt::Display for ScoreBandwidth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScoreBandwidth::Auto => f.write_str("auto"),
            ScoreBandwidth::Fixed(a) => write!(f, "{a}"),
        }
    }
}

/// Kernel estimate of the error density and its symmetrized score.
#[derive(Clone, Debug)]
pub struct ScoreEstimate {
    pseudo_errors: Vec<f64>,
    sorted: Vec<f64>,
    a: f64,
    b: f64,
    kernel: BaseKernel,
}

impl ScoreEstimate {
    pub fn new(pseudo_errors: Vec<f64>, a: f64, b: f64, kernel: BaseKernel) -> Result<Self> {
        if pseudo_errors.is_empty() {
            return Err(Error::EmptySample);
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidArgument(format!("score bandwidth a must be positive, got {a}")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidArgument(format!("density floor b must be positive, got {b}")));
        }
        let mut sorted = pseudo_errors.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            pseudo_errors,
            sorted,
            a,
            b,
            kernel,
        })
    }

    pub fn pseudo_errors(&self) -> &[f64] {
        &self.pseudo_errors
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn kernel(&self) -> BaseKernel {
        self.kernel
    }

    fn neighbours(&self, t: f64) -> &[f64] {
        let radius = if self.kernel.is_compact() {
            self.kernel.support_radius()
        } else {
            GAUSSIAN_CUTOFF
        } * self.a;
        let lo = self.sorted.partition_point(|e| *e < t - radius);
        let hi = self.sorted.partition_point(|e| *e <= t + radius);
        &self.sorted[lo..hi]
    }

    /// `b + (n a)^-1 sum_i L((t - e_i)/a)`.
    pub fn g_hat(&self, t: f64) -> f64 {
        let s: f64 = self.neighbours(t).iter().map(|e| self.kernel.eval((t - e) / self.a)).sum();
        self.b + s / (self.sorted.len() as f64 * self.a)
    }

    /// `(n a^2)^-1 sum_i L'((t - e_i)/a)`.
    pub fn g_hat_prime(&self, t: f64) -> f64 {
        let s: f64 = self
            .neighbours(t)
            .iter()
            .map(|e| self.kernel.derivative((t - e) / self.a))
            .sum();
        s / (self.sorted.len() as f64 * self.a * self.a)
    }

    /// `g'(t) / g(t)` from a single pass over the window.
    fn log_derivative(&self, t: f64) -> f64 {
        let (mut sum, mut slope) = (0.0, 0.0);
        for e in self.neighbours(t) {
            let u = (t - e) / self.a;
            let l = self.kernel.eval(u);
            sum += l;
            slope += match self.kernel {
                BaseKernel::Gaussian => -u * l,
                k => k.derivative(u),
            };
        }
        let n = self.sorted.len() as f64;
        (slope / (n * self.a * self.a)) / (self.b + sum / (n * self.a))
    }

    /// Symmetrized score, odd in `e` by construction.
    pub fn phi_hat(&self, e: f64) -> f64 {
        (self.log_derivative(e) - self.log_derivative(-e)) / 2.0
    }
}

pub fn g_hat(s: &ScoreEstimate, t: f64) -> f64 {
    s.g_hat(t)
}

pub fn g_hat_prime(s: &ScoreEstimate, t: f64) -> f64 {
    s.g_hat_prime(t)
}

pub fn phi_hat(s: &ScoreEstimate, e: f64) -> f64 {
    s.phi_hat(e)
}

/// Pseudo-errors `Y~ - X~'beta^` of a profile fit, centred by its intercept.
pub fn pseudo_errors(fit: &PlamFit, data: &Dataset) -> Result<Vec<f64>> {
    if fit.estimator != EstimatorTag::Sam {
        return Err(Error::InvalidArgument(format!(
            "pseudo-errors need a SAM fit, got {}",
            fit.estimator
        )));
    }
    if fit.n() != data.n() {
        return Err(Error::DimensionMismatch("fit and data have different sizes".into()));
    }
    Ok(fit.residuals.clone())
}

/// `(n^-1 sum X~ X~') (n^-1 sum phi(e_i)^2)`.
pub fn info_hat(s: &ScoreEstimate, x_tilde: ArrayView2<f64>) -> Result<DMatrix<f64>> {
    let scores: Vec<f64> = s.pseudo_errors().iter().map(|e| s.phi_hat(*e)).collect();
    info_from_scores(&scores, x_tilde)
}

fn info_from_scores(scores: &[f64], x_tilde: ArrayView2<f64>) -> Result<DMatrix<f64>> {
    let n = x_tilde.nrows();
    if scores.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {n} rows",
            scores.len()
        )));
    }
    let factor = scores.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(factor > 0.0) {
        return Err(Error::NonInvertibleInformation("all estimated scores are zero".into()));
    }
    let info = gram(x_tilde, false) * (factor / n as f64);
    let (lo, hi) = eigen_range(&info);
    if !(lo > 0.0 && hi / lo < 1e10) {
        return Err(Error::NonInvertibleInformation(format!(
            "residualized Gram matrix is singular (eigenvalues {lo:e} .. {hi:e})"
        )));
    }
    Ok(info)
}

/// Advisory checks of the rate conditions `n^(1/2) h b min(a^2, b^2) -> inf`
/// and `a^2 / (h (log n)^2) -> inf` at the given finite values.
pub fn validate_tuning(a: f64, b: f64, h: &Bandwidths, n: usize) -> Vec<String> {
    let nf = n as f64;
    let log_n = nf.ln();
    let mut warnings = Vec::new();
    for (j, &hj) in h.as_slice().iter().enumerate() {
        let first = nf.sqrt() * hj * b * (a * a).min(b * b);
        if !(first >= 1.0) {
            warnings.push(format!(
                "n^(1/2) h_{} b min(a^2, b^2) = {first:.3e} < 1: score floor or bandwidth may be too small for n = {n}",
                j + 1
            ));
        }
        let second = a * a / (hj * log_n * log_n);
        if !(second >= 0.1) {
            warnings.push(format!(
                "a^2 / (h_{} (log n)^2) = {second:.3e} < 0.1: score bandwidth a = {a} is small relative to h",
                j + 1
            ));
        }
    }
    warnings
}

/// Result of the one-step update alone.
#[derive(Clone, Debug)]
pub struct OneStep {
    pub beta_tilde: Vec<f64>,
    pub info_hat: DMatrix<f64>,
    pub cov_beta: DMatrix<f64>,
    pub score: ScoreEstimate,
}

/// One Newton step from `beta` given residualized covariates and
/// pseudo-errors.
pub fn one_step(x_tilde: ArrayView2<f64>, errors: &[f64], beta: &[f64], a: f64, b: f64, kernel: BaseKernel) -> Result<OneStep> {
    let (n, p) = x_tilde.dim();
    if beta.len() != p {
        return Err(Error::DimensionMismatch(format!("{} coefficients for {p} columns", beta.len())));
    }
    let score = ScoreEstimate::new(errors.to_vec(), a, b, kernel)?;
    let phi: Vec<f64> = errors.iter().map(|e| score.phi_hat(*e)).collect();
    let info = info_from_scores(&phi, x_tilde)?;
    let inv = inverse_spd(&info, "estimated information")
        .map_err(|_| Error::NonInvertibleInformation("estimated information matrix".into()))?;
    let mut grad = DVector::<f64>::zeros(p);
    for (row, f) in x_tilde.outer_iter().zip(&phi) {
        for j in 0..p {
            grad[j] += row[j] * f;
        }
    }
    grad /= n as f64;
    let step = &inv * grad;
    let beta_tilde = beta.iter().zip(step.iter()).map(|(b, s)| b - s).collect();
    Ok(OneStep {
        beta_tilde,
        info_hat: info,
        cov_beta: inv / n as f64,
        score,
    })
}

#[derive(Clone, Debug)]
pub struct EfficientFit {
    pub beta_tilde: Vec<f64>,
    pub info_hat: DMatrix<f64>,
    /// `I^-1 / n`.
    pub cov_beta: DMatrix<f64>,
    pub base: PlamFit,
    pub score: ScoreEstimate,
    pub a_requested: ScoreBandwidth,
    /// Set when the automatic choice of `a` fell back to Silverman's rule.
    pub a_fallback: bool,
    pub skewness: f64,
    /// `m(.; beta~)`: the response fit minus the covariate fits times `beta~`.
    pub additive: AdditiveFit,
    pub intercept: f64,
    /// `Y - X'beta~ - m(Z; beta~)`, centred.
    pub residuals: Vec<f64>,
    pub warnings: Vec<String>,
}

impl EfficientFit {
    pub fn standard_errors(&self) -> Vec<f64> {
        crate::plam::standard_errors_of(&self.cov_beta)
    }

    pub fn generalized_r2(&self, data: &Dataset) -> Result<f64> {
        r2_from_residuals(&data.y, &self.residuals)
    }
}

/// ASAM: profile fit, then one adaptive Newton step.
pub fn asam_fit(data: &Dataset, config: &SbfConfig, a: ScoreBandwidth, b: f64) -> Result<EfficientFit> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::InvalidArgument(format!("density floor b must be positive, got {b}")));
    }
    let base = sam_fit(data, config)?;
    asam_from_sam(base, data, config, a, b)
}

/// ASAM starting from an existing SAM fit of `data`.
pub fn asam_from_sam(base: PlamFit, data: &Dataset, config: &SbfConfig, a: ScoreBandwidth, b: f64) -> Result<EfficientFit> {
    let errors = pseudo_errors(&base, data)?;
    let (a_value, a_fallback) = match a {
        ScoreBandwidth::Fixed(v) => (v, false),
        ScoreBandwidth::Auto => {
            let sj = sj_bandwidth(&errors)?;
            (sj.bandwidth, sj.fallback)
        }
    };
    let step = one_step(base.x_tilde.view(), &errors, &base.beta, a_value, b, BaseKernel::Gaussian)?;

    let mut warnings = validate_tuning(a_value, b, &config.bandwidths, data.n());
    if a_fallback {
        warnings.push("Sheather-Jones selector found no root; score bandwidth from Silverman's rule".into());
    }
    let skew = skewness(&errors);
    if skew.abs() > SKEWNESS_WARNING {
        warnings.push(format!(
            "pseudo-errors have skewness {skew:.3}; the symmetric-error score may be misspecified"
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let raw: Vec<f64> = base
        .x_tilde
        .outer_iter()
        .zip(&base.y_tilde)
        .map(|(row, y)| y - row.iter().zip(&step.beta_tilde).map(|(x, b)| x * b).sum::<f64>())
        .collect();
    let shift = raw.iter().sum::<f64>() / raw.len() as f64;
    let residuals = raw.iter().map(|r| r - shift).collect();
    let x_fits: Vec<&AdditiveFit> = base.response_fits[1..].iter().collect();
    let neg_beta: Vec<f64> = step.beta_tilde.iter().map(|b| -b).collect();
    let mut additive = base.response_fits[0].combine(&x_fits, &neg_beta);
    additive.m0 += shift;
    Ok(EfficientFit {
        beta_tilde: step.beta_tilde,
        info_hat: step.info_hat,
        cov_beta: step.cov_beta,
        score: step.score,
        base,
        a_requested: a,
        a_fallback,
        skewness: skew,
        intercept: additive.m0,
        additive,
        residuals,
        warnings,
    })
}
