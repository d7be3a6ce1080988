//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error class used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad arguments or configuration values. Exit code 1.
    Usage,
    /// Malformed or inconsistent input data. Exit code 2.
    Data,
    /// Unexpected internal failure. Exit code 3.
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // ── container format ────────────────────────────────────────────
    #[error("malformed header: {reason} (byte {position})")]
    MalformedHeader { position: u64, reason: String },

    #[error("tensor '{name}': unsupported dtype '{dtype}'")]
    UnsupportedDtype { name: String, dtype: String },

    #[error("tensor '{name}': data region overlaps a previous region (byte {position})")]
    OffsetOverlap { name: String, position: u64 },

    #[error("tensor '{name}': data region truncated (byte {position})")]
    TruncatedData { name: String, position: u64 },

    #[error("tensor '{name}': {reason} (byte {position})")]
    InvalidTensorMeta {
        name: String,
        position: u64,
        reason: String,
    },

    #[error("duplicate tensor name '{name}'")]
    DuplicateTensor { name: String },

    #[error("tensor '{name}': mask element {index} is {value}, expected 0 or 1")]
    InvalidMaskValue {
        name: String,
        index: usize,
        value: u8,
    },

    // ── alignment between containers ────────────────────────────────
    #[error("layout fingerprint mismatch: mask expects {expected:#018x}, checkpoint is {actual:#018x}")]
    FingerprintMismatch { expected: u64, actual: u64 },

    #[error("tensor '{name}': shape mismatch (expected {expected:?}, got {actual:?})")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("tensor '{name}' not found")]
    MissingTensor { name: String },

    #[error("tensor '{name}' is not F32")]
    NotF32 { name: String },

    #[error("mask layout mismatch: {reason}")]
    LayoutMismatch { reason: String },

    // ── pruning / subnetworks ───────────────────────────────────────
    #[error("pruning fraction {value} is outside (0, 1)")]
    InvalidFraction { value: f64 },

    #[error("round {round}: cannot prune {requested} weights, only {available} remain unpruned")]
    RateInfeasible {
        round: usize,
        requested: usize,
        available: usize,
    },

    #[error("eval loss {value} is not a finite non-negative number ({context})")]
    InvalidLoss { value: f64, context: String },

    // ── training ────────────────────────────────────────────────────
    #[error("training diverged at step {step} (non-finite loss)")]
    Diverged { step: usize },

    #[error("token '{token}' is not in the vocabulary")]
    OutOfVocab { token: String },

    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },

    // ── localization ────────────────────────────────────────────────
    #[error("k = {k} exceeds the intersection support size {intersection}")]
    KTooLarge { k: usize, intersection: usize },

    #[error("budget {budget} exceeds the candidate set size {candidates}")]
    BudgetTooLarge { budget: usize, candidates: usize },

    #[error("tensor '{name}' has selected weights but no component mapping")]
    UnmappedTensor { name: String },

    // ── editing ─────────────────────────────────────────────────────
    #[error("alpha must be finite, got {alpha}")]
    NonFiniteAlpha { alpha: f64 },

    #[error("alpha {alpha} is invalid for strategy {strategy}: expected {expected}")]
    AlphaOutOfRange {
        alpha: f64,
        strategy: String,
        expected: String,
    },

    #[error("expected a dense checkpoint but it is flagged as masked ({reason})")]
    NotDense { reason: String },

    // ── WEAT ────────────────────────────────────────────────────────
    #[error("word '{word}' has a zero vector; cosine similarity is undefined")]
    ZeroVector { word: String },

    #[error("association scores are all equal{}; effect size is undefined", layer_suffix(.layer))]
    DegenerateDistribution { layer: Option<usize> },

    #[error("exhaustive permutation test requires |X| = |Y|, got {x} and {y}")]
    UnequalPartitionSizes { x: usize, y: usize },

    #[error("{partitions} partitions exceed the cap of {cap}; use the Monte Carlo method")]
    EnumerationTooLarge { partitions: u128, cap: u64 },

    #[error("word '{word}' from test '{spec}' is missing from the embedding table")]
    MissingWord { word: String, spec: String },

    #[error("empty word set {set} in test '{spec}'")]
    EmptyWordSet { set: String, spec: String },

    // ── CDA ─────────────────────────────────────────────────────────
    #[error("target term '{term}' has no paired term")]
    MissingPair { term: String },

    // ── files / parsing ─────────────────────────────────────────────
    #[error("{path}: {reason}")]
    BadInputFile { path: PathBuf, reason: String },
}

fn layer_suffix(layer: &Option<usize>) -> String {
    match layer {
        Some(idx) => format!(" at layer {idx}"),
        None => String::new(),
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            InvalidFraction { .. }
            | InvalidConfig { .. }
            | NonFiniteAlpha { .. }
            | AlphaOutOfRange { .. }
            | UnequalPartitionSizes { .. }
            | EnumerationTooLarge { .. } => ErrorClass::Usage,
            // A file the user named but we cannot find is their data
            // problem; any other i/o failure is ours.
            Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                ErrorClass::Data
            }
            Io { .. } => ErrorClass::Internal,
            _ => ErrorClass::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
