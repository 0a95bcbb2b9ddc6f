use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("divergent integral: path-loss exponent {0} must exceed 2")]
    DivergentIntegral(f64),

    #[error("numerical failure in {what}: achieved error {achieved:e}")]
    Numerical { what: &'static str, achieved: f64 },

    #[error("coverage target {target} is not attainable; interference-limited ceiling is {ceiling:.6}")]
    InfeasibleQos { target: f64, ceiling: f64 },

    #[error("utility domain error: {0}")]
    Domain(String),

    #[error("closed form is singular for supplier {supplier}, operator {operator}")]
    SingularBranch { supplier: usize, operator: usize },

    #[error("stationarity is unbounded for supplier {0}: no quadratic emissions term")]
    UnboundedStationarity(usize),

    #[error("infeasible instance: {0}")]
    Infeasible(String),

    #[error("brute-force oracle cannot handle {dims} free dimensions with {grid_points} grid points")]
    OracleScale { dims: usize, grid_points: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg()))
    }
}
