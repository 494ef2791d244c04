use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid outcome: {0}")]
    InvalidOutcome(String),

    #[error("pixel grid too narrow: half-width {half_width} must reach {required}")]
    GridTooNarrow { half_width: f64, required: f64 },

    #[error("sampler majorant violated at L={l}, slot {slot}: target {target:e} > bound {bound:e}")]
    MajorantViolation {
        l: usize,
        slot: usize,
        target: f64,
        bound: f64,
    },

    #[error("record parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
