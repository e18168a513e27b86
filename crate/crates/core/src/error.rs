use alloc::string::String;
use core::fmt;

/// Errors raised by the detection engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not compose.
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// More frames in a batch than the positional table covers.
    Capacity { frames: usize, max: usize },
    /// A prototype spread violates `log sigma > 0`.
    Constraint { index: usize, sigma: f64 },
    /// Invalid configuration value.
    Config(String),
    /// A video with zero frames.
    EmptyVideo,
    /// An operation received no input where at least one item is required.
    Empty(&'static str),
    /// Dataset composition does not satisfy an operation's requirements.
    Dataset(String),
    /// AUC needs both classes.
    UndefinedAuc { positives: usize, negatives: usize },
    /// Embedding source failure (IO, decoding, missing video).
    Source(String),
    /// Invariant broken between cooperating calls (e.g. stale activation).
    Internal(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, left, right } => write!(
                f,
                "shape error in {op}: {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::Capacity { frames, max } => {
                write!(f, "batch of {frames} frames exceeds positional capacity {max}")
            }
            Error::Constraint { index, sigma } => {
                write!(f, "prototype spread sigma[{index}] = {sigma} must exceed 1")
            }
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::EmptyVideo => f.write_str("video has no frames"),
            Error::Empty(what) => write!(f, "empty input: {what}"),
            Error::Dataset(msg) => write!(f, "dataset error: {msg}"),
            Error::UndefinedAuc {
                positives,
                negatives,
            } => write!(
                f,
                "AUC undefined with {positives} fake and {negatives} real records"
            ),
            Error::Source(msg) => write!(f, "embedding source error: {msg}"),
            Error::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
