//! Declarative simulation studies: a TOML file in, three CSV tables out.
//!
//! ```toml
//! replicates = 100
//! seed = 2024
//! estimators = ["sam", "pl", "asam"]
//! error_laws = ["student-t3", "gaussian-mixture"]   # optional
//! c_values = [1.0, 2.0, 3.0]                        # optional
//! # bandwidth_pairs = [[0.1, 0.2], [0.2, 0.2]]      # default {0.05..0.30}^2
//!
//! [dgp]
//! n = 400
//! p = 2
//! rho = 0.8
//!
//! [asam]
//! a_grid = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8]
//! b = 0.01
//! a_grid_overrides = { gaussian-mixture = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6] }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapt::{ScoreBandwidth, DEFAULT_SCORE_FLOOR};
use crate::error::{Error, Result};
use crate::report::full_precision;
use crate::simlab::mc::{asam_label, DEFAULT_MC_GRID_SIZE};
use crate::simlab::{
    efficiency_ratio, default_bandwidth_grid, run_mc_with_grid, AsamEstimator, DgpConfig, ErrorLaw, McEstimator,
    McResults, PlEstimator, SamEstimator,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyEstimator {
    Sam,
    Pl,
    Asam,
}

fn default_a_grid() -> Vec<f64> {
    vec![0.3, 0.4, 0.5, 0.6, 0.7, 0.8]
}
fn default_b() -> f64 {
    DEFAULT_SCORE_FLOOR
}
fn default_grid_size() -> usize {
    DEFAULT_MC_GRID_SIZE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsamSpec {
    #[serde(default = "default_a_grid")]
    pub a_grid: Vec<f64>,
    /// Also run ASAM with the Sheather-Jones choice of `a`.
    #[serde(default)]
    pub include_auto: bool,
    #[serde(default = "default_b")]
    pub b: f64,
    /// Per error law (by name), replaces `a_grid`.
    #[serde(default)]
    pub a_grid_overrides: BTreeMap<String, Vec<f64>>,
}

impl Default for AsamSpec {
    fn default() -> Self {
        Self {
            a_grid: default_a_grid(),
            include_auto: false,
            b: default_b(),
            a_grid_overrides: BTreeMap::new(),
        }
    }
}

impl AsamSpec {
    pub fn a_grid_for(&self, law: ErrorLaw) -> Vec<ScoreBandwidth> {
        let mut grid: Vec<ScoreBandwidth> = self
            .a_grid_overrides
            .get(law.name())
            .unwrap_or(&self.a_grid)
            .iter()
            .map(|a| ScoreBandwidth::Fixed(*a))
            .collect();
        if self.include_auto {
            grid.push(ScoreBandwidth::Auto);
        }
        grid
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub replicates: usize,
    pub seed: u64,
    pub estimators: Vec<StudyEstimator>,
    #[serde(default)]
    pub dgp: DgpConfig,
    #[serde(default)]
    pub error_laws: Option<Vec<ErrorLaw>>,
    #[serde(default)]
    pub c_values: Option<Vec<f64>>,
    #[serde(default)]
    pub bandwidth_pairs: Option<Vec<(f64, f64)>>,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default)]
    pub asam: AsamSpec,
}

impl StudyConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.replicates < 2 {
            return bad(format!("replicates = {} (need at least 2)", self.replicates));
        }
        if self.estimators.is_empty() {
            return bad("estimators must name at least one of sam, pl, asam".into());
        }
        if self.bandwidth_pairs.as_ref().is_some_and(|p| p.is_empty()) {
            return bad("bandwidth_pairs is empty".into());
        }
        if !(self.asam.b > 0.0 && self.asam.b.is_finite()) {
            return bad(format!("asam.b = {} must be positive", self.asam.b));
        }
        let grids = std::iter::once(&self.asam.a_grid).chain(self.asam.a_grid_overrides.values());
        for grid in grids {
            if let Some(a) = grid.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
                return bad(format!("score bandwidth {a} must be positive"));
            }
        }
        for name in self.asam.a_grid_overrides.keys() {
            if ![ErrorLaw::Gaussian, ErrorLaw::StudentT3, ErrorLaw::GaussianMixture]
                .iter()
                .any(|l| l.name() == name)
            {
                return bad(format!("asam.a_grid_overrides: unknown error law {name:?}"));
            }
        }
        for s in self.scenarios() {
            s.validate().map_err(|e| Error::Config(format!("dgp: {e}")))?;
        }
        Ok(())
    }

    /// One design per (error law, C) combination.
    pub fn scenarios(&self) -> Vec<DgpConfig> {
        let laws = self.error_laws.clone().unwrap_or_else(|| vec![self.dgp.error]);
        let cs = self.c_values.clone().unwrap_or_else(|| vec![self.dgp.c]);
        laws.iter()
            .flat_map(|&error| {
                cs.iter().map(move |&c| DgpConfig {
                    error,
                    c,
                    ..self.dgp.clone()
                })
            })
            .collect()
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.bandwidth_pairs.clone().unwrap_or_else(default_bandwidth_grid)
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioResult {
    pub dgp: DgpConfig,
    pub results: McResults,
}

pub fn run_study(cfg: &StudyConfig) -> Result<Vec<ScenarioResult>> {
    cfg.validate()?;
    let pairs = cfg.pairs();
    cfg.scenarios()
        .into_iter()
        .map(|dgp| {
            let want = |e| cfg.estimators.contains(&e);
            let asam = AsamEstimator {
                a_grid: cfg.asam.a_grid_for(dgp.error),
                b: cfg.asam.b,
                include_sam: want(StudyEstimator::Sam),
            };
            let mut estimators: Vec<&dyn McEstimator> = Vec::new();
            if want(StudyEstimator::Asam) {
                estimators.push(&asam);
            } else if want(StudyEstimator::Sam) {
                estimators.push(&SamEstimator);
            }
            if want(StudyEstimator::Pl) {
                estimators.push(&PlEstimator);
            }
            log::info!("scenario: error = {}, C = {}", dgp.error.name(), dgp.c);
            let results = run_mc_with_grid(&dgp, &estimators, &pairs, cfg.replicates, cfg.seed, cfg.grid_size)?;
            Ok(ScenarioResult { dgp, results })
        })
        .collect()
}

fn param_name(k: usize) -> String {
    format!("beta{}", k + 1)
}

fn opt(v: Option<f64>) -> String {
    v.map(full_precision).unwrap_or_default()
}

/// Writes `mse_table.csv`, `best_mse.csv` and `boxplot_data.csv` into `dir`.
pub fn write_study_outputs(scenarios: &[ScenarioResult], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;

    let mut table = csv::Writer::from_path(dir.join("mse_table.csv"))?;
    table.write_record([
        "error_law",
        "c",
        "estimator",
        "h1",
        "h2",
        "parameter",
        "mse",
        "failure_rate",
        "instability_rate",
        "flagged",
    ])?;
    let mut best = csv::Writer::from_path(dir.join("best_mse.csv"))?;
    best.write_record(["error_law", "c", "estimator", "parameter", "statistic", "value", "h1", "h2"])?;
    let mut boxplot = csv::Writer::from_path(dir.join("boxplot_data.csv"))?;
    boxplot.write_record(["error_law", "c", "estimator", "a", "h1", "h2", "parameter", "mse"])?;

    for s in scenarios {
        let r = &s.results;
        let law = s.dgp.error.name();
        let c = full_precision(s.dgp.c);
        for (label, cells) in r.labels.iter().zip(&r.cells) {
            let a = label
                .strip_prefix("ASAM(a=")
                .and_then(|rest| rest.strip_suffix(')'))
                .unwrap_or("");
            for cell in cells {
                for (k, mse) in cell.mse.iter().enumerate() {
                    let (h1, h2) = (full_precision(cell.pair.0), full_precision(cell.pair.1));
                    table.write_record([
                        law,
                        &c,
                        label,
                        &h1,
                        &h2,
                        &param_name(k),
                        &opt(*mse),
                        &full_precision(cell.failure_rate),
                        &full_precision(cell.instability_rate),
                        if cell.flagged { "true" } else { "false" },
                    ])?;
                    if label == "SAM" || !a.is_empty() {
                        boxplot.write_record([law, &c, label, a, &h1, &h2, &param_name(k), &opt(*mse)])?;
                    }
                }
            }
            for k in 0..r.truth.len() {
                match r.best_mse(label, k) {
                    Ok(b) => best.write_record([
                        law,
                        &c,
                        label,
                        &param_name(k),
                        "best_mse",
                        &full_precision(b.mse),
                        &full_precision(b.pair.0),
                        &full_precision(b.pair.1),
                    ])?,
                    Err(e) => log::warn!("{law}, C = {c}: {e}"),
                }
                if let Ok(m) = r.median_mse(label, k) {
                    best.write_record([law, &c, label, &param_name(k), "median_mse", &full_precision(m), "", ""])?;
                }
            }
        }
        if r.labels.iter().any(|l| l == "SAM") && r.labels.iter().any(|l| l == "PL") {
            for k in 0..r.truth.len() {
                if let Ok(ratio) = efficiency_ratio(r, "SAM", r, "PL", k) {
                    best.write_record([
                        law,
                        &c,
                        "SAM/PL",
                        &param_name(k),
                        "efficiency_ratio",
                        &full_precision(ratio),
                        "",
                        "",
                    ])?;
                }
            }
        }
    }
    table.flush()?;
    best.flush()?;
    boxplot.flush()?;
    Ok(())
}

/// The `a` labels used in the output tables, for reference.
pub fn asam_labels(a_grid: &[ScoreBandwidth]) -> Vec<String> {
    a_grid.iter().map(|a| asam_label(*a)).collect()
}
