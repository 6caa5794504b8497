//! Simulation designs: truncated normal covariates, interaction-driven
//! linear covariates, and three symmetric error laws.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use super::quad::adaptive_simpson;
use crate::data::Dataset;
use crate::error::{Error, Result};

const MIN_ACCEPTANCE: f64 = 1e-4;
const PILOT_DRAWS: usize = 20_000;
const PILOT_SEED: u64 = 0x7275_6e63_6174_6564;

const MIXTURE_MEAN: f64 = 1.5;
const MIXTURE_SD: f64 = 0.6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorLaw {
    /// N(0, 1).
    #[default]
    Gaussian,
    /// Student t with 3 degrees of freedom.
    StudentT3,
    /// 0.5 N(-1.5, 0.6^2) + 0.5 N(1.5, 0.6^2).
    GaussianMixture,
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

impl ErrorLaw {
    pub fn name(&self) -> &'static str {
        match self {
            ErrorLaw::Gaussian => "gaussian",
            ErrorLaw::StudentT3 => "student-t3",
            ErrorLaw::GaussianMixture => "gaussian-mixture",
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match self {
            ErrorLaw::Gaussian => normal_pdf(x),
            ErrorLaw::StudentT3 => 2.0 / (PI * 3f64.sqrt()) * (1.0 + x * x / 3.0).powi(-2),
            ErrorLaw::GaussianMixture => {
                0.5 / MIXTURE_SD
                    * (normal_pdf((x + MIXTURE_MEAN) / MIXTURE_SD) + normal_pdf((x - MIXTURE_MEAN) / MIXTURE_SD))
            }
        }
    }

    pub fn density_derivative(&self, x: f64) -> f64 {
        match self {
            ErrorLaw::Gaussian => -x * normal_pdf(x),
            ErrorLaw::StudentT3 => -8.0 * x / (3.0 * PI * 3f64.sqrt()) * (1.0 + x * x / 3.0).powi(-3),
            ErrorLaw::GaussianMixture => {
                let s2 = MIXTURE_SD * MIXTURE_SD;
                -0.5 / MIXTURE_SD
                    * ((x + MIXTURE_MEAN) / s2 * normal_pdf((x + MIXTURE_MEAN) / MIXTURE_SD)
                        + (x - MIXTURE_MEAN) / s2 * normal_pdf((x - MIXTURE_MEAN) / MIXTURE_SD))
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            ErrorLaw::Gaussian => 1.0,
            ErrorLaw::StudentT3 => 3.0,
            ErrorLaw::GaussianMixture => MIXTURE_SD * MIXTURE_SD + MIXTURE_MEAN * MIXTURE_MEAN,
        }
    }

    /// `I_g = int g'^2 / g`; exact for the normal, quadrature otherwise.
    pub fn fisher_information(&self) -> Result<f64> {
        let half_range = match self {
            ErrorLaw::Gaussian => return Ok(1.0),
            ErrorLaw::StudentT3 => 2000.0,
            ErrorLaw::GaussianMixture => 12.0,
        };
        let integrand = |x: f64| {
            let g = self.density(x);
            if g > 0.0 {
                self.density_derivative(x).powi(2) / g
            } else {
                0.0
            }
        };
        // symmetric integrand; split where the mass is
        let core = adaptive_simpson(&integrand, 0.0, 10.0, 1e-12)?;
        let tail = if half_range > 10.0 {
            adaptive_simpson(&integrand, 10.0, half_range, 1e-12)?
        } else {
            0.0
        };
        Ok(2.0 * (core + tail))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ErrorLaw::Gaussian => rng.sample(StandardNormal),
            ErrorLaw::StudentT3 => StudentT::new(3.0).expect("valid degrees of freedom").sample(rng),
            ErrorLaw::GaussianMixture => {
                let centre = if rng.random::<bool>() { MIXTURE_MEAN } else { -MIXTURE_MEAN };
                let z: f64 = rng.sample(StandardNormal);
                centre + MIXTURE_SD * z
            }
        }
    }
}

/// Multivariate normal restricted to `[0, 1]^d`, sampled by rejection.
#[derive(Clone, Debug)]
pub struct TruncatedMvNormal {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    acceptance: f64,
}

impl TruncatedMvNormal {
    pub fn new(mean: &[f64], cov: &DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {d}, covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("covariance is not positive definite".into()))?
            .l();
        let mut sampler = Self {
            mean: DVector::from_column_slice(mean),
            chol,
            acceptance: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(PILOT_SEED);
        let accepted = (0..PILOT_DRAWS).filter(|_| sampler.in_box(&sampler.propose(&mut rng))).count();
        sampler.acceptance = accepted as f64 / PILOT_DRAWS as f64;
        if sampler.acceptance < MIN_ACCEPTANCE {
            return Err(Error::LowAcceptance(sampler.acceptance));
        }
        Ok(sampler)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Pilot estimate of the rejection sampler's acceptance rate.
    pub fn acceptance(&self) -> f64 {
        self.acceptance
    }

    fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.chol * z
    }

    fn in_box(&self, x: &DVector<f64>) -> bool {
        x.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        loop {
            let x = self.propose(rng);
            if self.in_box(&x) {
                return x.iter().copied().collect();
            }
        }
    }
}

/// One draw from `N(mean, cov)` truncated to the unit cube.
pub fn sample_truncated_mvnormal<R: Rng + ?Sized>(mean: &[f64], cov: &DMatrix<f64>, rng: &mut R) -> Result<Vec<f64>> {
    Ok(TruncatedMvNormal::new(mean, cov)?.sample(rng))
}

/// How the first linear covariate depends on `Z`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum X1Form {
    /// `C (2 Z1 - 1)(1 - 2 Z2) + U`: a pure interaction, orthogonal to
    /// additive functions when `Z1` and `Z2` are independent.
    #[default]
    CenteredInteraction,
    /// `C Z1 (1 - 2 Z2) + U`; its additive projection is `0.5 C (1 - 2 Z2)`.
    Interaction,
    /// `C Z1 + U`: additive conditional mean.
    Additive,
}

impl X1Form {
    /// `E(X1 | Z)` for slope `c`.
    pub fn mean(&self, c: f64, z: &[f64]) -> f64 {
        match self {
            X1Form::CenteredInteraction => c * (2.0 * z[0] - 1.0) * (1.0 - 2.0 * z[1]),
            X1Form::Interaction => c * z[0] * (1.0 - 2.0 * z[1]),
            X1Form::Additive => c * z[0],
        }
    }
}

fn default_n() -> usize {
    400
}
fn default_d() -> usize {
    2
}
fn default_p() -> usize {
    1
}
fn default_c() -> f64 {
    1.0
}
fn default_m0() -> f64 {
    3.0
}
fn default_beta() -> Vec<f64> {
    vec![1.5, 0.8]
}
fn default_u_variance() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    /// 1 uses `X1` only, 2 adds the Bernoulli covariate `X2`.
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default)]
    pub rho: f64,
    #[serde(default)]
    pub error: ErrorLaw,
    #[serde(default = "default_m0")]
    pub m0: f64,
    #[serde(default = "default_beta")]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub x1_form: X1Form,
    #[serde(default = "default_u_variance")]
    pub u_variance: f64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n: default_n(),
            d: default_d(),
            p: default_p(),
            c: default_c(),
            rho: 0.0,
            error: ErrorLaw::Gaussian,
            m0: default_m0(),
            beta: default_beta(),
            x1_form: X1Form::default(),
            u_variance: default_u_variance(),
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n < 50 {
            return bad(format!("n = {} is below the minimum of 50", self.n));
        }
        if self.d < 2 {
            return bad(format!("d = {} but the design needs at least Z1 and Z2", self.d));
        }
        if !(1..=2).contains(&self.p) {
            return bad(format!("p must be 1 or 2, got {}", self.p));
        }
        if self.beta.len() < self.p {
            return bad(format!("{} coefficients given for p = {}", self.beta.len(), self.p));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return bad(format!("C must be non-negative, got {}", self.c));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if !(self.u_variance > 0.0 && self.u_variance.is_finite()) {
            return bad(format!("U variance must be positive, got {}", self.u_variance));
        }
        if !self.m0.is_finite() || self.beta.iter().any(|b| !b.is_finite()) {
            return bad("coefficients must be finite".into());
        }
        Ok(())
    }

    /// `{(1 - rho) I + rho 1 1'} / 4`.
    pub fn covariance(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.d, |i, j| if i == j { 0.25 } else { 0.25 * self.rho })
    }

    pub fn truth(&self) -> Vec<f64> {
        self.beta[..self.p].to_vec()
    }
}

/// `m_j` of the design: two sine components, then squares.
pub fn component(j: usize, z: f64) -> f64 {
    let s = (2.0 * PI * (z - 0.5)).sin();
    match j {
        0 => s,
        1 => z - 0.5 + s,
        _ => z * z,
    }
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// A validated design with its covariate sampler.
#[derive(Clone, Debug)]
pub struct Dgp {
    config: DgpConfig,
    sampler: TruncatedMvNormal,
}

impl Dgp {
    pub fn new(config: DgpConfig) -> Result<Self> {
        config.validate()?;
        let sampler = TruncatedMvNormal::new(&vec![0.5; config.d], &config.covariance())?;
        Ok(Self { config, sampler })
    }

    pub fn config(&self) -> &DgpConfig {
        &self.config
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Dataset> {
        self.generate_n(self.config.n, rng)
    }

    pub fn generate_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Dataset> {
        let cfg = &self.config;
        let u_sd = cfg.u_variance.sqrt();
        let mut z = Array2::zeros((n, cfg.d));
        let mut x = Array2::zeros((n, cfg.p));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let zi = self.sampler.sample(rng);
            let u: f64 = rng.sample(StandardNormal);
            let x1 = cfg.x1_form.mean(cfg.c, &zi) + u_sd * u;
            x[[i, 0]] = x1;
            let mut yi = cfg.m0 + cfg.beta[0] * x1;
            if cfg.p == 2 {
                let t = ((zi[0] + zi[1]) / 2.0).exp() + (2.0 * PI * zi[0]).sin() - x1 * x1;
                let x2 = if rng.random::<f64>() < logistic(t) { 1.0 } else { 0.0 };
                x[[i, 1]] = x2;
                yi += cfg.beta[1] * x2;
            }
            for (j, &zj) in zi.iter().enumerate() {
                z[[i, j]] = zj;
                yi += component(j, zj);
            }
            y.push(yi + cfg.error.sample(rng));
        }
        Dataset::new(y, x, z)
    }
}

pub fn gen_dataset<R: Rng + ?Sized>(cfg: &DgpConfig, rng: &mut R) -> Result<Dataset> {
    Dgp::new(cfg.clone())?.generate(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simlab::quad::adaptive_simpson_2d;

    fn draws(cov: &DMatrix<f64>, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let tmvn = TruncatedMvNormal::new(&vec![0.5; cov.nrows()], cov).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| tmvn.sample(&mut rng)).collect()
    }

    #[test]
    fn truncated_mean_and_support() {
        let cfg = DgpConfig::default();
        let xs = draws(&cfg.covariance(), 100_000, 1);
        for j in 0..2 {
            let m = xs.iter().map(|v| v[j]).sum::<f64>() / xs.len() as f64;
            assert!((m - 0.5).abs() < 0.005, "{m}");
        }
        assert!(xs.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn truncated_correlation_matches_quadrature() {
        let rho = 0.8;
        let cov = DgpConfig {
            rho,
            ..DgpConfig::default()
        }
        .covariance();
        // bivariate normal kernel on the unit square, up to a constant
        let s2 = 0.25;
        let dens = |x: f64, y: f64| {
            let (a, b) = (x - 0.5, y - 0.5);
            (-(a * a - 2.0 * rho * a * b + b * b) / (2.0 * s2 * (1.0 - rho * rho))).exp()
        };
        let q = |f: &dyn Fn(f64, f64) -> f64| adaptive_simpson_2d(&|x, y| f(x, y) * dens(x, y), (0.0, 1.0), (0.0, 1.0), 1e-11).unwrap();
        let mass = q(&|_, _| 1.0);
        let mx = q(&|x, _| x) / mass;
        let vx = q(&|x, _| (x - mx).powi(2)) / mass;
        let cxy = q(&|x, y| (x - mx) * (y - mx)) / mass;
        let truth = cxy / vx;
        // independent SciPy dblquad value
        assert!((truth - 0.470_911_495_745_208).abs() < 1e-8, "{truth}");

        let xs = draws(&cov, 100_000, 2);
        let n = xs.len() as f64;
        let m: Vec<f64> = (0..2).map(|j| xs.iter().map(|v| v[j]).sum::<f64>() / n).collect();
        let c = |j: usize, k: usize| xs.iter().map(|v| (v[j] - m[j]) * (v[k] - m[k])).sum::<f64>() / n;
        let sample = c(0, 1) / (c(0, 0) * c(1, 1)).sqrt();
        assert!((sample - truth).abs() < 0.03, "{sample} vs {truth}");
    }

    #[test]
    fn low_acceptance_is_rejected() {
        let mean = vec![5.0, 5.0];
        let cov = DMatrix::identity(2, 2) * 0.01;
        assert!(matches!(TruncatedMvNormal::new(&mean, &cov), Err(Error::LowAcceptance(_))));
        assert!(TruncatedMvNormal::new(&[0.5], &DMatrix::from_element(1, 1, -1.0)).is_err());
    }

    #[test]
    fn fisher_information() {
        assert_eq!(ErrorLaw::Gaussian.fisher_information().unwrap(), 1.0);
        let t3 = ErrorLaw::StudentT3.fisher_information().unwrap();
        // (nu + 1) / (nu + 3)
        assert!((t3 - 2.0 / 3.0).abs() < 1e-8, "{t3}");
        let mix = ErrorLaw::GaussianMixture.fisher_information().unwrap();
        assert!(mix > 1.0 / ErrorLaw::GaussianMixture.variance() && mix < 1.0 / (0.6 * 0.6), "{mix}");
        for law in [ErrorLaw::Gaussian, ErrorLaw::StudentT3, ErrorLaw::GaussianMixture] {
            let mass = 2.0 * adaptive_simpson(&|x| law.density(x), 0.0, 400.0, 1e-12).unwrap();
            assert!((mass - 1.0).abs() < 1e-4, "{law:?} {mass}");
            let h = 1e-6;
            for x in [-2.0, 0.3, 1.7] {
                let fd = (law.density(x + h) - law.density(x - h)) / (2.0 * h);
                assert!((fd - law.density_derivative(x)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn error_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for law in [ErrorLaw::Gaussian, ErrorLaw::GaussianMixture] {
            let e: Vec<f64> = (0..100_000).map(|_| law.sample(&mut rng)).collect();
            let v = e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64;
            assert!((v / law.variance() - 1.0).abs() < 0.03);
        }
    }

    #[test]
    fn design_properties() {
        let cfg = DgpConfig {
            c: 0.0,
            p: 2,
            n: 500,
            ..DgpConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = gen_dataset(&cfg, &mut rng).unwrap();
        assert!(data.x.column(1).iter().all(|v| *v == 0.0 || *v == 1.0));
        // C = 0: X1 is U, uncorrelated with Z
        let corr = {
            let x: Vec<f64> = data.x.column(0).to_vec();
            let z: Vec<f64> = data.z.column(0).to_vec();
            let (mx, mz) = (crate::stats::mean(&x), crate::stats::mean(&z));
            let c: f64 = x.iter().zip(&z).map(|(a, b)| (a - mx) * (b - mz)).sum();
            c / (x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() * z.iter().map(|b| (b - mz).powi(2)).sum::<f64>()).sqrt()
        };
        assert!(corr.abs() < 0.12, "{corr}");

        for form in [X1Form::Interaction, X1Form::CenteredInteraction] {
            let cfg = DgpConfig {
                n: 100_000,
                x1_form: form,
                ..DgpConfig::default()
            };
            let data = gen_dataset(&cfg, &mut rng).unwrap();
            let m = data.x.column(0).sum() / 100_000.0;
            assert!(m.abs() < 0.01, "{form:?} {m}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(DgpConfig { n: 10, ..DgpConfig::default() }.validate().is_err());
        assert!(DgpConfig { rho: 1.0, ..DgpConfig::default() }.validate().is_err());
        assert!(DgpConfig { c: -1.0, ..DgpConfig::default() }.validate().is_err());
        assert!(DgpConfig { p: 3, ..DgpConfig::default() }.validate().is_err());
        let toml_cfg: DgpConfig = toml::from_str("n = 100\nerror = \"student-t3\"\nx1_form = \"interaction\"").unwrap();
        assert_eq!(toml_cfg.error, ErrorLaw::StudentT3);
        assert_eq!(toml_cfg.beta, vec![1.5, 0.8]);
        assert!(toml::from_str::<DgpConfig>("bogus = 1").is_err());
    }
}
