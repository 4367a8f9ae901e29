use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two shapes that must agree do not.
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },
    /// Invalid configuration (sizes, fractions, budgets).
    Config(String),
    /// Malformed input data (labels outside {0,1}, length mismatches).
    Input(String),
    /// An API was used out of order.
    Usage(String),
    /// A loss or function evaluation produced NaN or infinity.
    NonFinite {
        step: u64,
        term: &'static str,
        block: String,
    },
    /// Exact enumeration refused because the game is too large.
    Budget { agents: usize, limit: usize },
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl fmt::Display,
        actual: impl fmt::Display,
    ) -> Self {
        use alloc::string::ToString;
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape {
                context,
                expected,
                actual,
            } => write!(f, "shape mismatch in {context}: expected {expected}, got {actual}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Input(msg) => write!(f, "input error: {msg}"),
            Error::Usage(msg) => write!(f, "usage error: {msg}"),
            Error::NonFinite { step, term, block } => write!(
                f,
                "non-finite value at step {step} in term `{term}` (parameter block: {block})"
            ),
            Error::Budget { agents, limit } => write!(
                f,
                "exact Shapley enumeration needs 2^{agents} coalitions per class; refusing above {limit} agents"
            ),
        }
    }
}

impl core::error::Error for Error {}
