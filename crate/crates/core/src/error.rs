use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("kernel evaluated at t - tau = {dt:e}; requires t > tau")]
    NonPositiveTimeSeparation { dt: f64 },

    #[error("non-finite integrand value {value} at {location}")]
    NonFiniteIntegrand { location: String, value: f64 },

    #[error("quadrature did not reach tolerance after {refinements} refinements (estimate {estimate:e}, target {target:e})")]
    QuadratureTolerance {
        refinements: usize,
        estimate: f64,
        target: f64,
    },

    #[error("series term {term} grew from {previous:e} to {current:e}; kernel iteration is not contracting")]
    NonContraction {
        term: usize,
        previous: f64,
        current: f64,
    },

    #[error("coefficient is not admissible: {0}")]
    Inadmissible(String),

    #[error("node (x = {x}, t = {t}) failed: {source}")]
    Node {
        x: f64,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("test function support {0} escapes the field grid")]
    SupportOutsideGrid(String),

    #[error("singular tridiagonal system at row {0}")]
    SingularSystem(usize),

    #[error("csv output failed: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
