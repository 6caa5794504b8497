//! Monte Carlo evaluation of the two information bounds: residuals from
//! the additive projection of `E(X|Z)` versus residuals from `E(X|Z)`.

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;

use super::dgp::{Dgp, DgpConfig};
use crate::error::{Error, Result};
use crate::kernel::{Bandwidths, ProductSmoother};
use crate::linalg::{eigen_range, inverse_spd};
use crate::sbf::{build_projection, sbf_multi, SbfConfig};

pub const MIN_MC_N: usize = 10_000;
pub const ORACLE_BANDWIDTH: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct InfoBoundReport {
    /// `I_g E(X - eta)(X - eta)'`, `eta` the additive projection.
    pub i_plam: DMatrix<f64>,
    /// `I_g E(X - E(X|Z))(X - E(X|Z))'`.
    pub i_pl: DMatrix<f64>,
    /// Asymptotic variance of the first coefficient under the additive
    /// model relative to the unrestricted one; `I_pl / I_plam` for `p = 1`.
    pub ratio: f64,
    pub fisher_g: f64,
    /// Smallest eigenvalue of `I_plam - I_pl`.
    pub min_gap_eigenvalue: f64,
    pub mc_n: usize,
}

impl InfoBoundReport {
    /// Whether `I_plam - I_pl` is PSD up to `slack * trace(I_plam)`.
    pub fn ordering_holds(&self, slack: f64) -> bool {
        self.min_gap_eigenvalue >= -slack * self.i_plam.trace()
    }
}

/// SBF settings for the oracle: `h = 0.05` on every coordinate.
pub fn oracle_config(d: usize) -> Result<SbfConfig> {
    Ok(SbfConfig::new(Bandwidths::uniform(d, ORACLE_BANDWIDTH)?))
}

fn covariance(resid: &Array2<f64>) -> DMatrix<f64> {
    let (n, p) = resid.dim();
    let means: Vec<f64> = (0..p).map(|j| resid.column(j).sum() / n as f64).collect();
    DMatrix::from_fn(p, p, |j, k| {
        resid
            .column(j)
            .iter()
            .zip(resid.column(k))
            .map(|(a, b)| (a - means[j]) * (b - means[k]))
            .sum::<f64>()
            / n as f64
    })
}

pub fn info_bound_mc<R: Rng + ?Sized>(cfg: &DgpConfig, mc_n: usize, config: &SbfConfig, rng: &mut R) -> Result<InfoBoundReport> {
    if mc_n < MIN_MC_N {
        return Err(Error::InvalidArgument(format!("mc_n = {mc_n} is below {MIN_MC_N}")));
    }
    let fisher_g = cfg.error.fisher_information()?;
    let dgp = Dgp::new(cfg.clone())?;
    let data = dgp.generate_n(mc_n, rng)?;
    let p = data.p();

    let proj = build_projection(data.z.view(), config)?;
    let eta = sbf_multi(data.x.view(), &proj, config)?;
    let mut additive_resid = data.x.clone();
    for (j, fit) in eta.iter().enumerate() {
        for (r, v) in additive_resid.column_mut(j).iter_mut().zip(fit.evaluate_rows(data.z.view())) {
            *r -= v;
        }
    }

    let smoother = ProductSmoother::new(data.z.view(), &config.bandwidths, config.kernel, &config.grid()?)?;
    let columns: Vec<Vec<f64>> = (0..p).map(|j| data.x.column(j).to_vec()).collect();
    let refs: Vec<&[f64]> = columns.iter().map(|c| c.as_slice()).collect();
    let smooth = smoother.smooth_at_data(&refs)?;
    if !smooth.isolated_rows.is_empty() {
        return Err(Error::DegenerateRows {
            rows: smooth.isolated_rows,
        });
    }
    let mut full_resid = data.x.clone();
    for (j, fitted) in smooth.values.iter().enumerate() {
        for (r, v) in full_resid.column_mut(j).iter_mut().zip(fitted) {
            *r -= v;
        }
    }

    let i_plam = covariance(&additive_resid) * fisher_g;
    let i_pl = covariance(&full_resid) * fisher_g;
    let inv_plam = inverse_spd(&i_plam, "additive-model information")?;
    let inv_pl = inverse_spd(&i_pl, "partially linear information")?;
    let ratio = inv_plam[(0, 0)] / inv_pl[(0, 0)];
    let (min_gap_eigenvalue, _) = eigen_range(&(&i_plam - &i_pl));
    Ok(InfoBoundReport {
        i_plam,
        i_pl,
        ratio,
        fisher_g,
        min_gap_eigenvalue,
        mc_n,
    })
}
