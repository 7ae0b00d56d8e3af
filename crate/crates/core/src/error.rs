use thiserror::Error;

/// Errors raised by the landscape, dynamics, measure and spectral routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite objective value at {location:?}")]
    Evaluation { location: Vec<f64> },

    #[error("unknown catalog entry `{name}`; available: {}", available.join(", "))]
    Catalog { name: String, available: Vec<String> },

    #[error("iterate diverged at step {step} (replica {replica:?}); last finite state {last_finite:?}")]
    Divergence {
        step: usize,
        replica: Option<u64>,
        last_finite: Vec<f64>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("box truncation violated: {0}; enlarge the box")]
    Truncation(String),

    #[error("weighted norm overflow: {0}")]
    WeightedNormOverflow(String),

    #[error("scheme error: {0}")]
    Scheme(String),

    #[error("eigensolver did not converge after {iterations} iterations; residuals {residuals:?}")]
    Solver {
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("precision floor reached: {0}")]
    Precision(String),

    #[error("grid resolution insufficient: {0}")]
    Resolution(String),

    #[error("degenerate critical point at {location:?}: Hessian eigenvalues {eigenvalues:?}")]
    Nondegeneracy {
        location: Vec<f64>,
        eigenvalues: Vec<f64>,
    },

    #[error("landscape has a single minimum; no finite saddle barrier")]
    NoBarrier,

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
