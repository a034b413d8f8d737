use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A logarithm was requested outside the injectivity domain of `exp`.
    #[error("log domain error: rotation angle {angle:.6} rad is within 1e-6 of pi")]
    LogDomain { angle: f64 },

    #[error("degenerate tangent at node {node}: |p_s| = {norm:e}")]
    DegenerateTangent { node: usize, norm: f64 },

    #[error("spatial sweep diverged at node {node}")]
    Divergence { node: usize },

    #[error("shooting did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("time {time} outside measurement range [{first}, {last}]")]
    OutOfRange { time: f64, first: f64, last: f64 },

    #[error("singular reflection matrix: {0}")]
    SingularReflection(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    /// Wraps an error with the simulated time at which it occurred.
    #[error("at t = {time:.6} s: {source}")]
    AtTime {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn at_time(self, time: f64) -> Self {
        match self {
            Error::AtTime { .. } => self,
            other => Error::AtTime {
                time,
                source: Box::new(other),
            },
        }
    }

    /// The innermost error, skipping time context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtTime { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerical solver (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self.root(),
            Error::NonConvergence { .. } | Error::Divergence { .. } | Error::LogDomain { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
