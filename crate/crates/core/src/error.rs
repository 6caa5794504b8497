use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bandwidth {0}: must lie strictly between 0 and 1")]
    InvalidBandwidth(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty sample")]
    EmptySample,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate kernel window at grid index {index} (z = {z}): local density {density:e} below guard")]
    DegenerateWindow { index: usize, z: f64, density: f64 },

    #[error("degenerate product-kernel windows at {} evaluation row(s), first: {:?}", rows.len(), &rows[..rows.len().min(10)])]
    DegenerateRows { rows: Vec<usize> },

    #[error("sparse design region: coordinate {coordinate}, grid index {index} (z = {z}) has estimated density {density:e}")]
    SparseRegion {
        coordinate: usize,
        index: usize,
        z: f64,
        density: f64,
    },

    #[error("column {0} is constant")]
    ConstantColumn(String),

    #[error("smooth backfitting did not converge for {column} after {iterations} sweeps (last relative change {final_delta:e})")]
    NotConverged {
        column: String,
        iterations: usize,
        final_delta: f64,
    },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("concurvity: residualized design is near singular (smallest eigenvalue {smallest_eigenvalue:e}, condition number {condition_number:e})")]
    Concurvity {
        smallest_eigenvalue: f64,
        condition_number: f64,
    },

    #[error("estimated information is not invertible ({0}); try a larger score bandwidth a or floor b")]
    NonInvertibleInformation(String),

    #[error("not implemented: {0}")]
    NotImplemented(&'static str),

    #[error("rejection sampler acceptance probability {0:e} is below 1e-4; use a different sampler")]
    LowAcceptance(f64),

    #[error("zero denominator: {0}")]
    ZeroDenominator(String),

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("non-numeric value {value:?} at row {row}, column {column:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("no rows left after applying the drop rule")]
    EmptyAfterDrop,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad user input (files, columns, configuration) rather
    /// than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::MissingColumn(_)
                | Error::NonNumeric { .. }
                | Error::EmptyAfterDrop
                | Error::Config(_)
                | Error::InvalidArgument(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
