//! Fit reports: a versioned JSON document and a component-curve CSV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapt::{EfficientFit, ScoreBandwidth};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::plam::{generalized_r2, standard_errors, EstimatorTag, NonparametricPart, PlamFit};
use crate::sbf::{AdditiveFit, SbfConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// JSON has no NaN or infinity; non-finite values are written as `null` and
/// read back as NaN.
mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }

    pub mod vec {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(v.iter().map(|x| x.is_finite().then_some(*x)))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Ok(Vec::<Option<f64>>::deserialize(d)?
                .into_iter()
                .map(|x| x.unwrap_or(f64::NAN))
                .collect())
        }
    }
}

/// Residualized Gram condition numbers above this are reported as warnings.
const CONDITION_WARNING: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    #[serde(with = "nullable")]
    pub std_error: f64,
    #[serde(with = "nullable")]
    pub z_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentCurve {
    pub name: String,
    /// Grid on `[0, 1]`.
    pub grid: Vec<f64>,
    /// The same grid mapped back to the covariate's original scale.
    pub raw_grid: Vec<f64>,
    /// NaN (`null` in JSON) where the curve is undefined.
    #[serde(with = "nullable::vec")]
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTuning {
    pub a: f64,
    pub b: f64,
    pub a_requested: String,
    pub a_fallback: bool,
    pub pseudo_error_skewness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    /// Largest sweep count over the backfitted columns.
    pub iterations: usize,
    /// Largest final relative change over the backfitted columns.
    pub final_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub estimator: EstimatorTag,
    pub n: usize,
    pub response: String,
    pub intercept: f64,
    pub coefficients: Vec<CoefficientRow>,
    pub generalized_r2: f64,
    pub sigma2: f64,
    pub bandwidths: Vec<f64>,
    pub grid_size: usize,
    pub tuning: Option<ScoreTuning>,
    pub convergence: Option<Convergence>,
    pub gram_condition: f64,
    pub components: Vec<ComponentCurve>,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn coefficient(&self, name: &str) -> Option<&CoefficientRow> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

fn coefficient_rows(names: &[String], beta: &[f64], se: &[f64]) -> Vec<CoefficientRow> {
    names
        .iter()
        .zip(beta)
        .zip(se)
        .map(|((name, &estimate), &std_error)| CoefficientRow {
            name: name.clone(),
            estimate,
            std_error,
            z_value: estimate / std_error,
        })
        .collect()
}

fn additive_curves(fit: &AdditiveFit, data: &Dataset) -> Vec<ComponentCurve> {
    let grid = fit.grid.points().to_vec();
    fit.components
        .iter()
        .zip(&data.rescale)
        .map(|(values, rec)| ComponentCurve {
            name: rec.name.clone(),
            raw_grid: grid.iter().map(|&g| rec.to_raw(g)).collect(),
            grid: grid.clone(),
            values: values.clone(),
        })
        .collect()
}

fn convergence(fits: &[AdditiveFit]) -> Option<Convergence> {
    (!fits.is_empty()).then(|| Convergence {
        converged: fits.iter().all(|f| f.converged),
        iterations: fits.iter().map(|f| f.iterations).max().unwrap_or(0),
        final_delta: fits.iter().map(|f| f.final_delta).fold(0.0, f64::max),
    })
}

fn condition_warnings(condition: f64) -> Vec<String> {
    if condition > CONDITION_WARNING {
        vec![format!(
            "residualized Gram matrix has condition number {condition:.3e}: X is nearly explained by Z"
        )]
    } else {
        Vec::new()
    }
}

/// Report for a SAM or PL fit.
pub fn plam_report(fit: &PlamFit, data: &Dataset, config: &SbfConfig) -> Result<FitReport> {
    let components = match &fit.nonparametric {
        NonparametricPart::Additive(add) => additive_curves(add, data),
        NonparametricPart::Diagonal { grid, values } => vec![ComponentCurve {
            name: "diagonal".into(),
            grid: grid.points().to_vec(),
            raw_grid: grid.points().to_vec(),
            values: values.clone(),
        }],
    };
    Ok(FitReport {
        schema_version: SCHEMA_VERSION,
        estimator: fit.estimator,
        n: data.n(),
        response: data.y_name.clone(),
        intercept: fit.intercept,
        coefficients: coefficient_rows(&data.x_names, &fit.beta, &standard_errors(fit)),
        generalized_r2: generalized_r2(fit, data)?,
        sigma2: fit.sigma2,
        bandwidths: config.bandwidths.as_slice().to_vec(),
        grid_size: config.grid_size,
        tuning: None,
        convergence: convergence(&fit.response_fits),
        gram_condition: fit.gram_condition,
        components,
        warnings: condition_warnings(fit.gram_condition),
    })
}

pub fn asam_report(fit: &EfficientFit, data: &Dataset, config: &SbfConfig) -> Result<FitReport> {
    let mut warnings = fit.warnings.clone();
    warnings.extend(condition_warnings(fit.base.gram_condition));
    Ok(FitReport {
        schema_version: SCHEMA_VERSION,
        estimator: EstimatorTag::Asam,
        n: data.n(),
        response: data.y_name.clone(),
        intercept: fit.intercept,
        coefficients: coefficient_rows(&data.x_names, &fit.beta_tilde, &fit.standard_errors()),
        generalized_r2: fit.generalized_r2(data)?,
        sigma2: fit.base.sigma2,
        bandwidths: config.bandwidths.as_slice().to_vec(),
        grid_size: config.grid_size,
        tuning: Some(ScoreTuning {
            a: fit.score.a(),
            b: fit.score.b(),
            a_requested: match fit.a_requested {
                ScoreBandwidth::Auto => "auto".into(),
                ScoreBandwidth::Fixed(_) => "fixed".into(),
            },
            a_fallback: fit.a_fallback,
            pseudo_error_skewness: fit.skewness,
        }),
        convergence: convergence(&fit.base.response_fits),
        gram_condition: fit.base.gram_condition,
        components: additive_curves(&fit.additive, data),
        warnings,
    })
}

pub fn write_json(report: &FitReport, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, report)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json(path: impl AsRef<Path>) -> Result<FitReport> {
    let report: FitReport = serde_json::from_reader(File::open(path)?)?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "report schema version {} is not supported (expected {SCHEMA_VERSION})",
            report.schema_version
        )));
    }
    Ok(report)
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn full_precision(v: f64) -> String {
    format!("{v:.16e}")
}

/// Columns `z`, then `m_<name>` and `<name>` (original scale) per component.
pub fn write_components_csv(report: &FitReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let Some(first) = report.components.first() else {
        return Err(Error::InvalidArgument("report has no component curves".into()));
    };
    let mut header = vec!["z".to_string()];
    for c in &report.components {
        header.push(format!("m_{}", c.name));
        header.push(format!("{}_raw", c.name));
    }
    w.write_record(&header)?;
    for (g, z) in first.grid.iter().enumerate() {
        let mut row = vec![full_precision(*z)];
        for c in &report.components {
            row.push(full_precision(c.values[g]));
            row.push(full_precision(c.raw_grid[g]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
