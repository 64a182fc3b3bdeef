use thiserror::Error;

use crate::contract::BundleViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("grid resolution must be at least 2, got {0}")]
    InvalidResolution(usize),

    #[error("invalid bundle: {0}")]
    InvalidBundle(BundleViolation),

    #[error("invalid parameter `{name}` = {value}: expected {expected}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("acceptance boundary {0} falls outside [0, 1]")]
    ModelDomain(f64),

    #[error("type value {0} is outside [0, 1]")]
    TypeDomain(f64),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("not applicable: {0}")]
    NotApplicable(&'static str),

    #[error("interval lower end {lo} exceeds upper end {hi}")]
    IntervalOrder { lo: f64, hi: f64 },

    #[error("bundle space holds {required} bundles, above the enumeration cap of {cap}")]
    CapExceeded { required: u128, cap: u128 },

    #[error("no exploration data yet (N = 0)")]
    ColdStart,

    #[error("unsupported TLFO configuration n = {n}, m = {m}: requires m >= 3 and n - 1 >= m")]
    UnsupportedSchedule { n: usize, m: usize },

    #[error("slope fit: {0}")]
    Fit(&'static str),

    #[error("{path}: {message}")]
    Config { path: String, message: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, expected: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            expected,
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
