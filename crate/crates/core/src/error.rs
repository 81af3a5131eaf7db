//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation (non-finite value,
    /// non-positive scale, empty vector, boundary state, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// No product carries positive share, so preferences are undefined.
    #[error("degenerate market: {0}")]
    DegenerateMarket(String),

    /// An iterative solver ran out of budget.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    /// A documented precondition of an operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Invalid scenario configuration. `line` is 1-based when known.
    #[error("{}", config_message(.line, .message))]
    Config {
        line: Option<usize>,
        message: String,
    },

    /// The state became non-finite during time integration.
    #[error("integration failed at t = {t_failed} (last valid t = {t_last_valid}): {message}")]
    Integration {
        t_last_valid: f64,
        t_failed: f64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn config_message(line: &Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("config error (line {l}): {message}"),
        None => format!("config error: {message}"),
    }
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Config {
            line,
            message: msg.into(),
        }
    }
}
