//! Seeded Monte Carlo comparisons of estimators over a bandwidth grid.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::dgp::{Dgp, DgpConfig};
use crate::adapt::{one_step, ScoreBandwidth};
use crate::bandwidth::sj_bandwidth;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{BaseKernel, Bandwidths};
use crate::plam::{pl_fit, sam_fit};
use crate::sbf::SbfConfig;

pub const DEFAULT_MC_GRID_SIZE: usize = 101;
/// Cells failing more often than this are excluded from best-MSE selection.
pub const FLAG_FAILURE_RATE: f64 = 0.5;

/// An estimator (or family of estimators sharing work) run on every
/// replicate and bandwidth pair.
pub trait McEstimator: Sync {
    fn labels(&self) -> Vec<String>;
    /// One result per label, in label order.
    fn estimate(&self, data: &Dataset, config: &SbfConfig) -> Vec<Result<Vec<f64>>>;
}

pub struct SamEstimator;

impl McEstimator for SamEstimator {
    fn labels(&self) -> Vec<String> {
        vec!["SAM".into()]
    }

    fn estimate(&self, data: &Dataset, config: &SbfConfig) -> Vec<Result<Vec<f64>>> {
        vec![sam_fit(data, config).map(|f| f.beta)]
    }
}

pub struct PlEstimator;

impl McEstimator for PlEstimator {
    fn labels(&self) -> Vec<String> {
        vec!["PL".into()]
    }

    fn estimate(&self, data: &Dataset, config: &SbfConfig) -> Vec<Result<Vec<f64>>> {
        vec![pl_fit(data, config).map(|f| f.beta)]
    }
}

/// ASAM at several score bandwidths from one SAM fit per replicate,
/// optionally reporting that SAM fit too.
pub struct AsamEstimator {
    pub a_grid: Vec<ScoreBandwidth>,
    pub b: f64,
    pub include_sam: bool,
}

pub fn asam_label(a: ScoreBandwidth) -> String {
    match a {
        ScoreBandwidth::Auto => "ASAM(a=auto)".into(),
        ScoreBandwidth::Fixed(v) => format!("ASAM(a={v:.2})"),
    }
}

impl McEstimator for AsamEstimator {
    fn labels(&self) -> Vec<String> {
        let mut labels = Vec::new();
        if self.include_sam {
            labels.push("SAM".into());
        }
        labels.extend(self.a_grid.iter().map(|a| asam_label(*a)));
        labels
    }

    fn estimate(&self, data: &Dataset, config: &SbfConfig) -> Vec<Result<Vec<f64>>> {
        let width = self.a_grid.len() + usize::from(self.include_sam);
        let base = match sam_fit(data, config) {
            Ok(f) => f,
            Err(e) => {
                let msg = e.to_string();
                return (0..width).map(|_| Err(Error::InvalidArgument(format!("SAM failed: {msg}")))).collect();
            }
        };
        let mut out = Vec::with_capacity(width);
        if self.include_sam {
            out.push(Ok(base.beta.clone()));
        }
        for a in &self.a_grid {
            let value = match a {
                ScoreBandwidth::Fixed(v) => Ok(*v),
                ScoreBandwidth::Auto => sj_bandwidth(&base.residuals).map(|s| s.bandwidth),
            };
            out.push(value.and_then(|a| {
                one_step(base.x_tilde.view(), &base.residuals, &base.beta, a, self.b, BaseKernel::Gaussian).map(|s| s.beta_tilde)
            }));
        }
        out
    }
}

/// `{0.05, 0.10, ..., 0.30}^2`.
pub fn default_bandwidth_grid() -> Vec<(f64, f64)> {
    let hs: Vec<f64> = (1..=6).map(|k| k as f64 / 20.0).collect();
    hs.iter().flat_map(|&a| hs.iter().map(move |&b| (a, b))).collect()
}

/// `h_1` for `Z1`; `h_2` for every other coordinate.
pub fn expand_pair((h1, h2): (f64, f64), d: usize) -> Result<Bandwidths> {
    Bandwidths::new((0..d).map(|j| if j == 0 { h1 } else { h2 }).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub label: String,
    pub pair: (f64, f64),
    /// Per parameter, over successful replicates; `None` if all failed.
    pub mse: Vec<Option<f64>>,
    pub failure_rate: f64,
    /// Failures plus estimates off by more than the size of the truth.
    pub instability_rate: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BestCell {
    pub mse: f64,
    pub pair: (f64, f64),
    pub pair_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McResults {
    pub truth: Vec<f64>,
    pub labels: Vec<String>,
    pub bandwidth_pairs: Vec<(f64, f64)>,
    pub seeds: Vec<u64>,
    /// `[label][pair][replicate]`, `None` where the fit failed.
    pub estimates: Vec<Vec<Vec<Option<Vec<f64>>>>>,
    /// `[label][pair]`.
    pub cells: Vec<Vec<CellSummary>>,
}

impl McResults {
    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::InvalidArgument(format!("no estimator labelled {label:?}")))
    }

    pub fn cell(&self, label: &str, pair_index: usize) -> Result<&CellSummary> {
        let l = self.label_index(label)?;
        self.cells[l]
            .get(pair_index)
            .ok_or_else(|| Error::InvalidArgument(format!("bandwidth pair {pair_index} out of range")))
    }

    /// MSE of one parameter at every bandwidth pair (`None` where all failed).
    pub fn mse_values(&self, label: &str, param: usize) -> Result<Vec<Option<f64>>> {
        self.check_param(param)?;
        let l = self.label_index(label)?;
        Ok(self.cells[l].iter().map(|c| c.mse[param]).collect())
    }

    /// Minimum MSE over unflagged cells.
    pub fn best_mse(&self, label: &str, param: usize) -> Result<BestCell> {
        self.check_param(param)?;
        let l = self.label_index(label)?;
        self.cells[l]
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.flagged)
            .filter_map(|(k, c)| c.mse[param].map(|m| (k, c.pair, m)))
            .min_by(|a, b| a.2.total_cmp(&b.2))
            .map(|(pair_index, pair, mse)| BestCell { mse, pair, pair_index })
            .ok_or_else(|| Error::InvalidArgument(format!("{label}: every bandwidth pair is flagged or failed")))
    }

    /// Median MSE over the bandwidth pairs with at least one success.
    pub fn median_mse(&self, label: &str, param: usize) -> Result<f64> {
        let values: Vec<f64> = self.mse_values(label, param)?.into_iter().flatten().collect();
        if values.is_empty() {
            return Err(Error::InvalidArgument(format!("{label}: no successful cell")));
        }
        Ok(crate::stats::median(&values))
    }

    fn check_param(&self, param: usize) -> Result<()> {
        if param >= self.truth.len() {
            return Err(Error::InvalidArgument(format!(
                "parameter {param} out of range for {} coefficients",
                self.truth.len()
            )));
        }
        Ok(())
    }
}

fn summarize(label: &str, pair: (f64, f64), truth: &[f64], reps: &[Option<Vec<f64>>]) -> CellSummary {
    let total = reps.len() as f64;
    let ok: Vec<&Vec<f64>> = reps.iter().flatten().collect();
    let failures = reps.len() - ok.len();
    let mse = (0..truth.len())
        .map(|k| {
            (!ok.is_empty()).then(|| ok.iter().map(|e| (e[k] - truth[k]).powi(2)).sum::<f64>() / ok.len() as f64)
        })
        .collect();
    let wild = ok
        .iter()
        .filter(|e| e.iter().zip(truth).any(|(v, t)| !((v - t).abs() <= t.abs())))
        .count();
    let failure_rate = failures as f64 / total;
    CellSummary {
        label: label.into(),
        pair,
        mse,
        failure_rate,
        instability_rate: (failures + wild) as f64 / total,
        flagged: failure_rate > FLAG_FAILURE_RATE,
    }
}

pub fn run_mc(
    cfg: &DgpConfig,
    estimators: &[&dyn McEstimator],
    bandwidth_grid: &[(f64, f64)],
    replicates: usize,
    base_seed: u64,
) -> Result<McResults> {
    run_mc_with_grid(cfg, estimators, bandwidth_grid, replicates, base_seed, DEFAULT_MC_GRID_SIZE)
}

/// Replicate `r` uses its own ChaCha8 stream seeded with `base_seed + r`,
/// so results do not depend on scheduling.
pub fn run_mc_with_grid(
    cfg: &DgpConfig,
    estimators: &[&dyn McEstimator],
    bandwidth_grid: &[(f64, f64)],
    replicates: usize,
    base_seed: u64,
    grid_size: usize,
) -> Result<McResults> {
    if replicates < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 replicates, got {replicates}")));
    }
    if estimators.is_empty() || bandwidth_grid.is_empty() {
        return Err(Error::InvalidArgument("need at least one estimator and one bandwidth pair".into()));
    }
    let dgp = Dgp::new(cfg.clone())?;
    let configs: Vec<SbfConfig> = bandwidth_grid
        .iter()
        .map(|&pair| {
            let config = SbfConfig::new(expand_pair(pair, cfg.d)?).with_grid_size(grid_size);
            config.validate()?;
            Ok(config)
        })
        .collect::<Result<_>>()?;
    let labels: Vec<String> = estimators.iter().flat_map(|e| e.labels()).collect();
    let seeds: Vec<u64> = (0..replicates as u64).map(|r| base_seed.wrapping_add(r)).collect();

    // [replicate][pair][label]
    let per_rep: Vec<Vec<Vec<Option<Vec<f64>>>>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = dgp.generate(&mut rng)?;
            Ok(configs
                .iter()
                .map(|config| {
                    estimators
                        .iter()
                        .flat_map(|e| e.estimate(&data, config))
                        .map(|r| match r {
                            Ok(b) => Some(b),
                            Err(e) => {
                                log::debug!("replicate seed {seed}: {e}");
                                None
                            }
                        })
                        .collect()
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let truth = cfg.truth();
    let estimates: Vec<Vec<Vec<Option<Vec<f64>>>>> = (0..labels.len())
        .map(|l| {
            (0..bandwidth_grid.len())
                .map(|k| per_rep.iter().map(|rep| rep[k][l].clone()).collect())
                .collect()
        })
        .collect();
    let cells = estimates
        .iter()
        .zip(&labels)
        .map(|(by_pair, label)| {
            by_pair
                .iter()
                .zip(bandwidth_grid)
                .map(|(reps, &pair)| summarize(label, pair, &truth, reps))
                .collect()
        })
        .collect();
    Ok(McResults {
        truth,
        labels,
        bandwidth_pairs: bandwidth_grid.to_vec(),
        seeds,
        estimates,
        cells,
    })
}

/// `best MSE(num) / best MSE(den)` for one parameter.
pub fn efficiency_ratio(num: &McResults, num_label: &str, den: &McResults, den_label: &str, param: usize) -> Result<f64> {
    if num.truth != den.truth {
        return Err(Error::InvalidArgument("results come from designs with different truths".into()));
    }
    let top = num.best_mse(num_label, param)?.mse;
    let bottom = den.best_mse(den_label, param)?.mse;
    if bottom == 0.0 {
        return Err(Error::ZeroDenominator(format!("best MSE of {den_label} is zero")));
    }
    Ok(top / bottom)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Oracle(Vec<f64>);

    impl McEstimator for Oracle {
        fn labels(&self) -> Vec<String> {
            vec!["ORACLE".into()]
        }
        fn estimate(&self, _: &Dataset, _: &SbfConfig) -> Vec<Result<Vec<f64>>> {
            vec![Ok(self.0.clone())]
        }
    }

    struct Flaky;

    impl McEstimator for Flaky {
        fn labels(&self) -> Vec<String> {
            vec!["FLAKY".into()]
        }
        fn estimate(&self, data: &Dataset, _: &SbfConfig) -> Vec<Result<Vec<f64>>> {
            // fails on roughly half the data sets, deterministically
            if data.y[0] > 3.0 {
                vec![Err(Error::InvalidArgument("stub".into()))]
            } else {
                vec![Ok(vec![1.0])]
            }
        }
    }

    fn small() -> DgpConfig {
        DgpConfig {
            n: 100,
            ..DgpConfig::default()
        }
    }

    #[test]
    fn truth_gives_zero_mse() {
        let res = run_mc(&small(), &[&Oracle(vec![1.5])], &[(0.2, 0.2), (0.3, 0.3)], 3, 1).unwrap();
        assert_eq!(res.best_mse("ORACLE", 0).unwrap().mse, 0.0);
        assert_eq!(res.cell("ORACLE", 1).unwrap().failure_rate, 0.0);
        assert!(matches!(
            efficiency_ratio(&res, "ORACLE", &res, "ORACLE", 0),
            Err(Error::ZeroDenominator(_))
        ));
        assert!(run_mc(&small(), &[&Oracle(vec![1.5])], &[(0.2, 0.2)], 1, 1).is_err());
    }

    #[test]
    fn mse_and_failure_bookkeeping() {
        let res = run_mc(&small(), &[&Oracle(vec![2.0]), &Flaky], &[(0.2, 0.2)], 20, 7).unwrap();
        assert!((res.best_mse("ORACLE", 0).unwrap().mse - 0.25).abs() < 1e-15);
        let cell = res.cell("FLAKY", 0).unwrap();
        let failures = res.estimates[1][0].iter().filter(|e| e.is_none()).count();
        assert!(failures > 0 && failures < 20);
        assert_eq!(cell.failure_rate, failures as f64 / 20.0);
        assert_eq!(cell.flagged, cell.failure_rate > 0.5);
        assert!((cell.mse[0].unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(res.seeds, (7..27).collect::<Vec<u64>>());
    }

    #[test]
    fn deterministic_and_self_ratio() {
        let grid = [(0.15, 0.2), (0.25, 0.25)];
        let a = run_mc(&small(), &[&SamEstimator, &PlEstimator], &grid, 4, 11).unwrap();
        let b = run_mc(&small(), &[&SamEstimator, &PlEstimator], &grid, 4, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(efficiency_ratio(&a, "SAM", &b, "SAM", 0).unwrap(), 1.0);
        assert!(a.best_mse("SAM", 0).unwrap().mse < 0.1);
        assert!(a.best_mse("SAM", 1).is_err());
    }

    #[test]
    fn asam_family_shares_the_sam_fit() {
        let est = AsamEstimator {
            a_grid: vec![ScoreBandwidth::Fixed(0.5), ScoreBandwidth::Auto],
            b: 0.01,
            include_sam: true,
        };
        assert_eq!(est.labels(), vec!["SAM", "ASAM(a=0.50)", "ASAM(a=auto)"]);
        let res = run_mc(&small(), &[&est, &SamEstimator], &[(0.2, 0.2)], 3, 5).unwrap();
        assert_eq!(res.estimates[0], res.estimates[3]);
        assert!(res.cells[2][0].failure_rate == 0.0);
    }

    #[test]
    fn grid_helpers() {
        let g = default_bandwidth_grid();
        assert_eq!(g.len(), 36);
        assert_eq!(g[0], (0.05, 0.05));
        assert_eq!(g[35], (0.3, 0.3));
        assert_eq!(expand_pair((0.1, 0.2), 4).unwrap().as_slice(), &[0.1, 0.2, 0.2, 0.2]);
    }
}
