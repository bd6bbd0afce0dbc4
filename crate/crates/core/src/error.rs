//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced anywhere in the pipeline, from gate application up to
/// training. The CLI maps these onto process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    // --- simulator ---
    #[error("requested {requested} qubits, supported range is 1..={max}")]
    Capacity { requested: usize, max: usize },
    #[error("qubit index {index} out of range for {num_qubits} qubits")]
    QubitIndex { index: usize, num_qubits: usize },
    #[error("duplicate qubit index {index}")]
    DuplicateQubit { index: usize },
    #[error("classical slot {slot} out of range for {num_slots} slots")]
    SlotIndex { slot: usize, num_slots: usize },
    #[error("classical slot {slot} is read before any measurement writes it")]
    SlotUnwritten { slot: usize },
    #[error("qubit counts differ: {left} vs {right}")]
    QubitCountMismatch { left: usize, right: usize },
    #[error("shot count must be at least 1")]
    ZeroShots,

    // --- shapes and configuration ---
    #[error("{context}: expected length {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid {what}: {why}")]
    InvalidValue { what: &'static str, why: String },

    // --- shot-based estimation ---
    #[error("no shots landed in the {branch} branch; inner product cannot be estimated")]
    EmptyBranch { branch: &'static str },

    // --- data ingestion ---
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("bad IDX magic in {path}: expected {expected}, found {found}")]
    IdxMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("image/label counts differ: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("dataset too small: {reason}")]
    DatasetTooSmall { reason: String },
    #[error("degenerate data: {reason}")]
    DegenerateData { reason: String },
    #[error("cannot mine triplets: {reason}")]
    Mining { reason: String },

    // --- persistence ---
    #[error("unsupported model file version {found} (this build reads version {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    // --- training ---
    #[error("batch must be nonempty")]
    EmptyBatch,
    #[error("loss became non-finite at epoch {epoch}")]
    Divergence { epoch: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
