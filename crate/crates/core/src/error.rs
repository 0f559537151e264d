use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("phase level {0} outside -2..=2")]
    InvalidLevel(i32),
    #[error("{name} must be {requirement}, got {value}")]
    InvalidParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("invalid subinterval grid: {0}")]
    InvalidGrid(String),
    #[error("prediction model invalid: R*dt/L = {0} must be < 1")]
    ModelInvalid(f64),
    #[error("exhaustive search supports at most 3 subintervals, got {0}")]
    TooManySubintervals(usize),
    #[error("record of {samples} samples is not an integer number of fundamental periods")]
    NonIntegerPeriods { samples: usize },
    #[error("sample rate {sample_rate} Hz too low for harmonic order {max_order} at {fundamental_hz} Hz")]
    Undersampled {
        sample_rate: f64,
        max_order: usize,
        fundamental_hz: f64,
    },
    #[error("fundamental component is zero; THD undefined")]
    ZeroFundamental,
    #[error("window of {window} s exceeds log length {length} s")]
    WindowTooLong { window: f64, length: f64 },
    #[error("window {0} s is not a multiple of the sample spacing")]
    WindowNotMultiple(f64),
    #[error("non-finite plant state at t = {t} s")]
    NonFinite { t: f64 },
    #[error("malformed run log: {0}")]
    RunLog(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::RunLog(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            requirement: "finite and > 0",
            value,
        })
    }
}
