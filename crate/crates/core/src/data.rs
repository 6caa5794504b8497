use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine map used to bring a raw nonparametric column onto `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaleRecord {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl RescaleRecord {
    pub fn to_unit(&self, raw: f64) -> f64 {
        (raw - self.min) / (self.max - self.min)
    }

    pub fn to_raw(&self, unit: f64) -> f64 {
        self.min + unit * (self.max - self.min)
    }
}

/// Observations `(Y, X, Z)` with `Z` on `[0, 1]^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub x: Array2<f64>,
    pub z: Array2<f64>,
    pub y_name: String,
    pub x_names: Vec<String>,
    pub z_names: Vec<String>,
    pub rescale: Vec<RescaleRecord>,
}

impl Dataset {
    /// Builds a dataset with generic column names and identity rescaling.
    pub fn new(y: Vec<f64>, x: Array2<f64>, z: Array2<f64>) -> Result<Self> {
        let x_names = (1..=x.ncols()).map(|j| format!("X{j}")).collect();
        let z_names: Vec<String> = (1..=z.ncols()).map(|j| format!("Z{j}")).collect();
        let rescale = z_names
            .iter()
            .map(|name| RescaleRecord {
                name: name.clone(),
                min: 0.0,
                max: 1.0,
            })
            .collect();
        let data = Self {
            y,
            x,
            z,
            y_name: "Y".into(),
            x_names,
            z_names,
            rescale,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn with_names(mut self, y_name: &str, x_names: Vec<String>, z_names: Vec<String>) -> Result<Self> {
        if x_names.len() != self.p() || z_names.len() != self.d() {
            return Err(Error::DimensionMismatch("column name count does not match data".into()));
        }
        for (rec, name) in self.rescale.iter_mut().zip(&z_names) {
            rec.name = name.clone();
        }
        self.y_name = y_name.into();
        self.x_names = x_names;
        self.z_names = z_names;
        Ok(self)
    }

    pub fn with_rescale(mut self, rescale: Vec<RescaleRecord>) -> Result<Self> {
        if rescale.len() != self.d() {
            return Err(Error::DimensionMismatch("one rescale record per Z column required".into()));
        }
        self.rescale = rescale;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn d(&self) -> usize {
        self.z.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.x.nrows() != n || self.z.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "y has {n} rows, X has {}, Z has {}",
                self.x.nrows(),
                self.z.nrows()
            )));
        }
        if self.p() == 0 || self.d() == 0 {
            return Err(Error::InvalidArgument("need at least one linear and one smooth covariate".into()));
        }
        if n <= self.p() + self.d() + 5 {
            return Err(Error::InvalidArgument(format!(
                "{n} observations are too few for p = {} and d = {} (need n > p + d + 5)",
                self.p(),
                self.d()
            )));
        }
        if self.y.iter().chain(self.x.iter()).chain(self.z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("data contain missing or non-finite values".into()));
        }
        if let Some(v) = self.z.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("Z value {v} outside [0, 1]")));
        }
        Ok(())
    }
}
