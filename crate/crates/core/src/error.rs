use thiserror::Error;

/// Errors raised by the antenna model, the estimators and the benchmark.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid antenna parameters: {0}")]
    InvalidParams(String),
    #[error("frequency {f_hz} Hz is at or below the waveguide cutoff {fc_hz} Hz")]
    BelowCutoff { f_hz: f64, fc_hz: f64 },
    #[error("frequency {f_hz} Hz does not radiate (|beta/k0| = {ratio})")]
    NonRadiating { f_hz: f64, ratio: f64 },
    #[error("beamwidth diverges at endfire (beam angle {theta_deg} deg)")]
    DivergentBeamwidth { theta_deg: f64 },
    #[error("no radiating frequency in the requested range")]
    NoRadiatingFrequency,
    #[error("angle {theta_deg} deg is outside the achievable span [{lo_deg}, {hi_deg}] deg")]
    OutOfBand { theta_deg: f64, lo_deg: f64, hi_deg: f64 },
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),
    #[error("invalid source scenario: {0}")]
    InvalidScenario(String),
    #[error("signal power is zero; SNR is undefined")]
    ZeroSignal,
    #[error("sector width factor must exceed 1, got {0}")]
    GammaTooSmall(f64),
    #[error("invalid field of view: {0}")]
    InvalidFov(String),
    #[error("sector {0} receives no radiating frequency")]
    EmptySector(usize),
    #[error("row range {lo}..={hi} out of bounds for {rows} rows")]
    IndexOutOfRange { lo: usize, hi: usize, rows: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing configuration key `{0}`")]
    MissingKey(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
