use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("invalid quantization spec: {0}")]
    InvalidSpec(String),

    #[error("non-finite input value at index {index}")]
    NonFinite { index: usize },

    #[error("value {value} at index {index} outside symmetric range ±{max}")]
    OutOfRange { index: usize, value: i64, max: i64 },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("bad magic bytes {found:?}, expected \"FXT1\"")]
    BadMagic { found: [u8; 4] },

    #[error("malformed header: {0}")]
    BadHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("{extra} trailing bytes after payload")]
    TrailingBytes { extra: usize },

    #[error("dimension overflow: {0}")]
    DimensionOverflow(String),

    #[error("invalid probability {value} for {name}")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("empty tensor")]
    EmptyTensor,

    #[error("kneading stride must be in 1..=65536, got {0}")]
    InvalidStride(usize),

    #[error("pointer {pointer} outside activation window of length {window}")]
    PointerOutOfWindow { pointer: usize, window: usize },

    #[error("word width {word} does not match datapath width {datapath}")]
    WidthMismatch { word: usize, datapath: usize },

    #[error("accumulator overflow in column {column}")]
    Overflow { column: usize },

    #[error("length mismatch: {weights} weights vs {activations} activations")]
    LengthMismatch { weights: usize, activations: usize },

    #[error("engine {engine} cannot run {bits}-bit tensors")]
    IncompatibleEngine { engine: String, bits: u32 },

    #[error("invalid energy model: {0}")]
    EnergyModel(String),

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the error's category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 3,
            Error::BadMagic { .. }
            | Error::BadHeader(_)
            | Error::Truncated { .. }
            | Error::TrailingBytes { .. }
            | Error::DimensionOverflow(_)
            | Error::Json(_)
            | Error::Csv(_) => 4,
            Error::Invariant(_) | Error::Overflow { .. } | Error::PointerOutOfWindow { .. } => 5,
            Error::Config(_)
            | Error::InvalidSpec(_)
            | Error::InvalidProbability { .. }
            | Error::InvalidStride(_)
            | Error::EnergyModel(_)
            | Error::IncompatibleEngine { .. } => 2,
            _ => 1,
        }
    }
}
