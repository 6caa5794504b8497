//! Boston housing analysis: MEDV on log(LSTAT) and CHAS linearly, six
//! smooth covariates, with the censored MEDV = 50 tracts removed.

use std::path::Path;

use serde::Serialize;

use crate::adapt::{asam_from_sam, ScoreBandwidth, DEFAULT_SCORE_FLOOR};
use crate::bandwidth::{coverage_bandwidth, rot_bandwidth};
use crate::data::Dataset;
use crate::error::Result;
use crate::ingest::{load_dataset, IngestSchema};
use crate::kernel::Bandwidths;
use crate::plam::sam_fit;
use crate::report::{asam_report, full_precision, plam_report, write_components_csv, write_json, FitReport};
use crate::sbf::SbfConfig;

pub fn boston_schema() -> IngestSchema {
    let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    IngestSchema {
        response: "MEDV".into(),
        parametric: names(&["LSTAT", "CHAS"]),
        nonparametric: names(&["CRIM", "RM", "NOX", "PTRATIO", "DIS", "TAX"]),
        log_transform: names(&["LSTAT", "DIS", "TAX"]),
        drop_rule: Some("MEDV == 50".parse().expect("valid rule")),
    }
}

#[derive(Clone, Debug)]
pub struct BostonOptions {
    /// Per-coordinate bandwidths; rule of thumb when `None`.
    pub bandwidths: Option<Vec<f64>>,
    pub grid_size: usize,
    pub score_bandwidth: ScoreBandwidth,
    pub score_floor: f64,
}

impl Default for BostonOptions {
    fn default() -> Self {
        Self {
            bandwidths: None,
            grid_size: 101,
            score_bandwidth: ScoreBandwidth::Auto,
            score_floor: DEFAULT_SCORE_FLOOR,
        }
    }
}

/// Rule-of-thumb bandwidth per column, raised where needed so that no
/// kernel window on `[0, 1]` is empty.
pub fn rule_of_thumb_bandwidths(data: &Dataset) -> Result<(Bandwidths, Vec<String>)> {
    let mut hs = Vec::with_capacity(data.d());
    let mut notes = Vec::new();
    for (j, name) in data.z_names.iter().enumerate() {
        let col = data.z.column(j).to_vec();
        let rot = rot_bandwidth(&col)?;
        let cover = coverage_bandwidth(&col);
        if cover > rot {
            notes.push(format!(
                "{name}: rule-of-thumb bandwidth {rot:.4} leaves empty kernel windows; raised to {cover:.4}"
            ));
            hs.push(cover.min(0.5));
        } else {
            hs.push(rot);
        }
    }
    Ok((Bandwidths::new(hs)?, notes))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub coefficient: String,
    pub sam_estimate: f64,
    pub sam_se: f64,
    pub sam_abs_z: f64,
    pub asam_estimate: f64,
    pub asam_se: f64,
    pub asam_abs_z: f64,
}

#[derive(Clone, Debug)]
pub struct BostonResult {
    pub data: Dataset,
    pub config: SbfConfig,
    pub sam: FitReport,
    pub asam: FitReport,
    pub comparison: Vec<ComparisonRow>,
}

pub fn run_boston(path: impl AsRef<Path>, opts: &BostonOptions) -> Result<BostonResult> {
    let data = load_dataset(path, &boston_schema())?;
    run_boston_on(data, opts)
}

pub fn run_boston_on(data: Dataset, opts: &BostonOptions) -> Result<BostonResult> {
    let (bandwidths, notes) = match &opts.bandwidths {
        Some(h) => (Bandwidths::new(h.clone())?, Vec::new()),
        None => rule_of_thumb_bandwidths(&data)?,
    };
    for note in &notes {
        log::info!("{note}");
    }
    let config = SbfConfig::new(bandwidths).with_grid_size(opts.grid_size);
    let sam = sam_fit(&data, &config)?;
    let mut sam_report = plam_report(&sam, &data, &config)?;
    sam_report.warnings.extend(notes.iter().cloned());
    let asam = asam_from_sam(sam, &data, &config, opts.score_bandwidth, opts.score_floor)?;
    let mut asam_report = asam_report(&asam, &data, &config)?;
    asam_report.warnings.extend(notes);

    let comparison = sam_report
        .coefficients
        .iter()
        .zip(&asam_report.coefficients)
        .map(|(s, a)| ComparisonRow {
            coefficient: s.name.clone(),
            sam_estimate: s.estimate,
            sam_se: s.std_error,
            sam_abs_z: s.z_value.abs(),
            asam_estimate: a.estimate,
            asam_se: a.std_error,
            asam_abs_z: a.z_value.abs(),
        })
        .collect();
    Ok(BostonResult {
        data,
        config,
        sam: sam_report,
        asam: asam_report,
        comparison,
    })
}

/// Both reports, their component curves, and `comparison.csv`.
pub fn write_boston_outputs(result: &BostonResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_json(&result.sam, dir.join("sam_report.json"))?;
    write_json(&result.asam, dir.join("asam_report.json"))?;
    write_components_csv(&result.sam, dir.join("sam_components.csv"))?;
    write_components_csv(&result.asam, dir.join("asam_components.csv"))?;
    let mut w = csv::Writer::from_path(dir.join("comparison.csv"))?;
    w.write_record([
        "coefficient",
        "sam_estimate",
        "sam_se",
        "sam_abs_z",
        "asam_estimate",
        "asam_se",
        "asam_abs_z",
    ])?;
    for r in &result.comparison {
        w.write_record([
            r.coefficient.clone(),
            full_precision(r.sam_estimate),
            full_precision(r.sam_se),
            full_precision(r.sam_abs_z),
            full_precision(r.asam_estimate),
            full_precision(r.asam_se),
            full_precision(r.asam_abs_z),
        ])?;
    }
    w.flush()?;
    Ok(())
}
