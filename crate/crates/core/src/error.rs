use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no clearing bracket on day {day}: aggregate excess demand samples {samples:?}")]
    NoBracket { day: usize, samples: Vec<(f64, f64)> },

    #[error("clearing did not converge on day {day} after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        day: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("total collapse on day {day}: no solvent fund remains")]
    TotalCollapse { day: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("rank-deficient design: columns {columns:?} are collinear with earlier columns")]
    RankDeficient { columns: Vec<String> },

    #[error("infeasible episode: {0}")]
    Infeasible(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Runtime simulation failures, as opposed to bad input.
    pub fn is_simulation_failure(&self) -> bool {
        matches!(
            self,
            Error::NoBracket { .. }
                | Error::NoConvergence { .. }
                | Error::TotalCollapse { .. }
                | Error::Infeasible(_)
        )
    }
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
