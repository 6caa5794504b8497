//! CSV ingestion: column selection, row filtering, log transforms and
//! min-max rescaling of the smooth covariates onto `[0, 1]`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, RescaleRecord};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CompareOp {
    const ALL: [(&'static str, CompareOp); 6] = [
        ("==", CompareOp::Eq),
        ("!=", CompareOp::Ne),
        ("<=", CompareOp::Le),
        (">=", CompareOp::Ge),
        ("<", CompareOp::Lt),
        (">", CompareOp::Gt),
    ];

    fn symbol(self) -> &'static str {
        Self::ALL.iter().find(|(_, op)| *op == self).map(|(s, _)| *s).unwrap_or("?")
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CompareOp::Eq => lhs == rhs,
            CompareOp::Ne => lhs != rhs,
            CompareOp::Lt => lhs < rhs,
            CompareOp::Le => lhs <= rhs,
            CompareOp::Gt => lhs > rhs,
            CompareOp::Ge => lhs >= rhs,
        }
    }
}

/// Rows for which `column op value` holds are removed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DropRule {
    pub column: String,
    pub op: CompareOp,
    pub value: f64,
}

impl FromStr for DropRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        for (symbol, op) in CompareOp::ALL {
            if let Some((lhs, rhs)) = s.split_once(symbol) {
                let column = lhs.trim().to_string();
                let value: f64 = rhs
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("drop rule {s:?}: {:?} is not a number", rhs.trim())))?;
                if column.is_empty() {
                    return Err(Error::Config(format!("drop rule {s:?} has no column")));
                }
                return Ok(DropRule { column, op, value });
            }
        }
        Err(Error::Config(format!(
            "drop rule {s:?} must look like 'COLUMN == value' (operators ==, !=, <, <=, >, >=)"
        )))
    }
}

impl TryFrom<String> for DropRule {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DropRule> for String {
    fn from(rule: DropRule) -> String {
        rule.to_string()
    }
}

impl fmt::Display for DropRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.column, self.op.symbol(), self.value)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSchema {
    pub response: String,
    pub parametric: Vec<String>,
    pub nonparametric: Vec<String>,
    #[serde(default)]
    pub log_transform: Vec<String>,
    #[serde(default)]
    pub drop_rule: Option<DropRule>,
}

impl IngestSchema {
    pub fn validate(&self) -> Result<()> {
        if self.parametric.is_empty() || self.nonparametric.is_empty() {
            return Err(Error::Config("need at least one parametric and one nonparametric column".into()));
        }
        let mut seen = vec![self.response.as_str()];
        for name in self.parametric.iter().chain(&self.nonparametric) {
            if seen.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "column {name:?} appears more than once among response and covariates"
                )));
            }
            seen.push(name);
        }
        if let Some(name) = self.log_transform.iter().find(|c| !seen.contains(&c.as_str())) {
            return Err(Error::Config(format!("log-transformed column {name:?} is not used by the model")));
        }
        Ok(())
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &IngestSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    let reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    read_dataset(reader, schema)
}

pub fn read_dataset<R: std::io::Read>(mut reader: csv::Reader<R>, schema: &IngestSchema) -> Result<Dataset> {
    schema.validate()?;
    let headers = reader.headers()?.clone();
    let mut names = vec![schema.response.clone()];
    names.extend(schema.parametric.iter().cloned());
    names.extend(schema.nonparametric.iter().cloned());
    if let Some(rule) = &schema.drop_rule {
        if !names.contains(&rule.column) {
            names.push(rule.column.clone());
        }
    }
    let indices: Vec<usize> = names.iter().map(|n| column_index(&headers, n)).collect::<Result<_>>()?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = indices
            .iter()
            .zip(&names)
            .map(|(&i, name)| {
                let cell = record.get(i).unwrap_or("");
                cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::NonNumeric {
                    // header is line 1
                    row: r + 2,
                    column: name.clone(),
                    value: cell.to_string(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if let Some(rule) = &schema.drop_rule {
        let k = names.iter().position(|n| *n == rule.column).expect("rule column was added");
        let before = rows.len();
        rows.retain(|row| !rule.op.holds(row[k], rule.value));
        log::info!("drop rule '{rule}' removed {} of {before} rows", before - rows.len());
    }
    if rows.is_empty() {
        return Err(Error::EmptyAfterDrop);
    }
    for name in &schema.log_transform {
        let k = names.iter().position(|n| n == name).expect("validated");
        for row in rows.iter_mut() {
            if !(row[k] > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "cannot take the logarithm of {} in column {name:?}",
                    row[k]
                )));
            }
            row[k] = row[k].ln();
        }
    }

    let n = rows.len();
    let (p, d) = (schema.parametric.len(), schema.nonparametric.len());
    let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let x = Array2::from_shape_fn((n, p), |(i, j)| rows[i][1 + j]);
    let mut z = Array2::from_shape_fn((n, d), |(i, j)| rows[i][1 + p + j]);
    let mut rescale = Vec::with_capacity(d);
    for (j, name) in schema.nonparametric.iter().enumerate() {
        let mut col = z.column_mut(j);
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(Error::ConstantColumn(name.clone()));
        }
        let record = RescaleRecord {
            name: name.clone(),
            min,
            max,
        };
        col.mapv_inplace(|v| record.to_unit(v));
        rescale.push(record);
    }
    Dataset::new(y, x, z)?
        .with_names(&schema.response, schema.parametric.clone(), schema.nonparametric.clone())?
        .with_rescale(rescale)
}
