//! Bandwidth rules: a rule of thumb for the backfitting bandwidths and the
//! Sheather-Jones solve-the-equation selector for the score bandwidth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{iqr, sample_sd, sorted};

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// `1.06 sd n^(-1/5)`, clamped to `[0.01, 0.5]`.
pub fn rot_bandwidth(z_col: &[f64]) -> Result<f64> {
    if z_col.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "rule-of-thumb bandwidth needs at least 2 observations, got {}",
            z_col.len()
        )));
    }
    let sd = sample_sd(z_col);
    let size = z_col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(sd > 1e-12 * size) {
        return Err(Error::ConstantColumn("bandwidth input".into()));
    }
    let h = 1.06 * sd * (z_col.len() as f64).powf(-0.2);
    Ok(h.clamp(0.01, 0.5))
}

/// Silverman's rule `0.9 min(sd, IQR/1.34) n^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("Silverman rule needs at least 2 observations".into()));
    }
    let sd = sample_sd(samples);
    let spread = iqr(samples) / 1.34;
    let scale = if spread > 0.0 { sd.min(spread) } else { sd };
    if !(scale > 0.0) {
        return Err(Error::ConstantColumn("bandwidth input".into()));
    }
    Ok(0.9 * scale * (samples.len() as f64).powf(-0.2))
}

/// Smallest bandwidth for which every point of `[0, 1]` lies within `0.9 h`
/// of an observation, so that a compact kernel never sees an empty window.
pub fn coverage_bandwidth(z_col: &[f64]) -> f64 {
    let s = sorted(z_col);
    let mut gap = 2.0 * s[0].max(0.0);
    gap = gap.max(2.0 * (1.0 - s[s.len() - 1]).max(0.0));
    for w in s.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    gap / (2.0 * 0.9)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SjBandwidth {
    pub bandwidth: f64,
    /// Set when no root was bracketed and Silverman's rule was used instead.
    pub fallback: bool,
}

/// Pairwise squared differences, either exact or binned for large samples.
struct PairTable {
    n: usize,
    sq: Vec<f64>,
    counts: Vec<f64>,
}

impl PairTable {
    const EXACT_LIMIT: usize = 5000;
    const BINS: usize = 1000;

    fn new(x: &[f64], exact: bool) -> Self {
        let n = x.len();
        if exact {
            let mut sq = Vec::with_capacity(n * (n - 1) / 2);
            for i in 1..n {
                for j in 0..i {
                    let d = x[i] - x[j];
                    sq.push(d * d);
                }
            }
            let counts = vec![1.0; sq.len()];
            return Self { n, sq, counts };
        }
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) * 1.01 / Self::BINS as f64;
        let mut bins = vec![0.0f64; Self::BINS];
        for &v in x {
            let b = (((v - lo) / width) as usize).min(Self::BINS - 1);
            bins[b] += 1.0;
        }
        let mut sq = Vec::with_capacity(Self::BINS);
        let mut counts = Vec::with_capacity(Self::BINS);
        for lag in 0..Self::BINS {
            let c: f64 = if lag == 0 {
                bins.iter().map(|c| c * (c - 1.0) / 2.0).sum()
            } else {
                (0..Self::BINS - lag).map(|k| bins[k] * bins[k + lag]).sum()
            };
            if c > 0.0 {
                let d = lag as f64 * width;
                sq.push(d * d);
                counts.push(c);
            }
        }
        Self { n, sq, counts }
    }

    /// Estimate of `int f''(x)^2 dx` with a Gaussian pilot of bandwidth `h`.
    fn phi4(&self, h: f64) -> f64 {
        let n = self.n as f64;
        let mut sum = 0.0;
        for (d2, c) in self.sq.iter().zip(&self.counts) {
            let u = d2 / (h * h);
            if u < 1000.0 {
                sum += c * (u * u - 6.0 * u + 3.0) * (-0.5 * u).exp();
            }
        }
        (2.0 * sum + 3.0 * n) / (n * (n - 1.0) * h.powi(5) * SQRT_2PI)
    }

    /// Estimate of `-int f'''(x)^2 dx` with a Gaussian pilot.
    fn phi6(&self, h: f64) -> f64 {
        let n = self.n as f64;
        let mut sum = 0.0;
        for (d2, c) in self.sq.iter().zip(&self.counts) {
            let u = d2 / (h * h);
            if u < 1000.0 {
                sum += c * (u * u * u - 15.0 * u * u + 45.0 * u - 15.0) * (-0.5 * u).exp();
            }
        }
        (2.0 * sum - 15.0 * n) / (n * (n - 1.0) * h.powi(7) * SQRT_2PI)
    }
}

/// Sheather-Jones "solve-the-equation" bandwidth for a Gaussian-kernel
/// density estimate of `samples`.
pub fn sj_bandwidth(samples: &[f64]) -> Result<SjBandwidth> {
    sj_impl(samples, samples.len() <= PairTable::EXACT_LIMIT)
}

fn sj_impl(samples: &[f64], exact_pairs: bool) -> Result<SjBandwidth> {
    let n = samples.len();
    if n < 10 {
        return Err(Error::InvalidArgument(format!(
            "Sheather-Jones selector needs at least 10 observations, got {n}"
        )));
    }
    let fallback = || -> Result<SjBandwidth> {
        log::warn!("Sheather-Jones equation has no root in the search bracket; using Silverman's rule");
        Ok(SjBandwidth {
            bandwidth: silverman_bandwidth(samples)?,
            fallback: true,
        })
    };
    let sd = sample_sd(samples);
    let spread = iqr(samples) / 1.349;
    let scale = if spread > 0.0 { sd.min(spread) } else { sd };
    if !(scale > 0.0) {
        return Err(Error::ConstantColumn("score bandwidth input".into()));
    }
    let nf = n as f64;
    let table = PairTable::new(samples, exact_pairs);
    let a = 1.24 * scale * nf.powf(-1.0 / 7.0);
    let b = 1.23 * scale * nf.powf(-1.0 / 9.0);
    let c1 = 1.0 / (2.0 * std::f64::consts::PI.sqrt() * nf);
    let td = -table.phi6(b);
    if !(td.is_finite() && td > 0.0) {
        return fallback();
    }
    let alpha2 = 1.357 * (table.phi4(a) / td).powf(1.0 / 7.0);
    if !alpha2.is_finite() {
        return fallback();
    }
    let f = |h: f64| (c1 / table.phi4(alpha2 * h.powf(5.0 / 7.0))).powf(0.2) - h;

    let base = scale * nf.powf(-0.2);
    let (mut lo, mut hi) = (0.01 * base, 10.0 * base);
    let (mut flo, fhi) = (f(lo), f(hi));
    if !(flo.is_finite() && fhi.is_finite()) || flo * fhi > 0.0 {
        return fallback();
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(SjBandwidth {
        bandwidth: 0.5 * (lo + hi),
        fallback: false,
    })
}
