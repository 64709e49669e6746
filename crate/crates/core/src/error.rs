use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid three-point law: v = {v}, p = {p}")]
    InvalidLaw { v: f64, p: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("scale k = {k} is not admissible for {family} (p = {p} > 1/2)")]
    InadmissibleScale { family: String, k: u32, p: f64 },
    #[error("unsupported family: {0}")]
    UnsupportedFamily(String),
    #[error("window too large: estimated {bytes} bytes exceeds cap of {cap} bytes")]
    WindowTooLarge { bytes: u64, cap: u64 },
    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },
    #[error("degenerate sigma: {0}")]
    DegenerateSigma(f64),
    #[error("shift {shift} outside the exact range 1..={max} of the cyclic tower")]
    SurrogateValidity { shift: u64, max: u64 },
    #[error("schedule overflow: k would exceed the configured maximum {max}")]
    ScheduleOverflow { max: u32 },
    #[error("insufficient replications at window {n1}x{n2}: stderr {stderr} vs estimate {estimate}")]
    InsufficientReplications {
        n1: usize,
        n2: usize,
        stderr: f64,
        estimate: f64,
    },
    #[error("invalid config at `{path}`: {message}")]
    ConfigInvalid { path: String, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
