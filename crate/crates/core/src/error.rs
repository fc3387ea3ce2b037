//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by the approximation, profiling, and optimization layers.
///
/// Variants are grouped by family; the CLI maps each family to a distinct
/// process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    // --- approximation family ---
    #[error("degree {degree} exceeds the maximum supported degree {max}")]
    DegreeTooLarge { degree: usize, max: usize },

    #[error("invalid Gaussian weight: {reason}")]
    InvalidWeight { reason: String },

    #[error("invalid activation: {reason}")]
    InvalidActivation { reason: String },

    #[error(
        "quadrature did not converge for coefficient {index}: \
         doubling the node count moved it by {delta:.3e} (tolerance {tolerance:.3e})"
    )]
    QuadratureNotConverged {
        index: usize,
        delta: f64,
        tolerance: f64,
    },

    #[error("Parseval MSE {value:.3e} is negative beyond the clamp threshold; quadrature inconsistent")]
    QuadratureInconsistent { value: f64 },

    #[error("non-finite series coefficient at index {index}")]
    NonFiniteCoefficient { index: usize },

    // --- statistics family ---
    #[error("layer {layer} has zero input variance; cannot fit a Gaussian weight")]
    DegenerateLayer { layer: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("dataset is empty")]
    EmptyDataset,

    // --- runtime-profile family ---
    #[error("invalid discretization unit nu = {nu}; must be positive and finite")]
    InvalidNu { nu: f64 },

    #[error("invalid degree space: {reason}")]
    InvalidDegreeSpace { reason: String },

    #[error("runtime profile: {reason}")]
    ProfileFormat { reason: String },

    #[error(
        "runtime profile layer {layer}: latency decreases from degree {lo_degree} to {hi_degree}"
    )]
    ProfileNonMonotone {
        layer: usize,
        lo_degree: i32,
        hi_degree: i32,
    },

    #[error("runtime profile layer {layer} is missing degree {degree}")]
    ProfileMissingDegree { layer: usize, degree: i32 },

    #[error("degree {degree} not present in the cost table for layer {layer}")]
    DegreeNotInTable { layer: usize, degree: i32 },

    // --- optimizer family ---
    #[error("brute force instance too large: {size} candidate vectors exceed the {limit} guard")]
    InstanceTooLarge { size: u128, limit: u128 },

    #[error(
        "no budget satisfies the accuracy bound {bound:.4}; best found: accuracy {best_accuracy:.4} at budget {best_budget}"
    )]
    BoundUnreachable {
        bound: f64,
        best_accuracy: f64,
        best_budget: u64,
        best_degrees: Vec<i32>,
    },

    #[error("degree vector has length {got}, expected {expected}")]
    DegreeVectorLength { expected: usize, got: usize },

    // --- model/dataset family ---
    #[error("model: {reason}")]
    ModelFormat { reason: String },

    #[error("dataset: {reason}")]
    DatasetFormat { reason: String },

    #[error("dimension mismatch at layer {layer}: expected input of length {expected}, got {got}")]
    DimensionMismatch {
        layer: usize,
        expected: usize,
        got: usize,
    },

    #[error("substitution requires {expected} series (one per activation layer), got {got}")]
    LayerCountMismatch { expected: usize, got: usize },

    #[error("cannot substitute the sentinel degree at layer {layer}; no series to install")]
    SentinelDegree { layer: usize },

    // --- I/O family ---
    #[error("failed to read {path}: {source}")]
    ReadFile {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("failed to write {path}: {source}")]
    WriteFile {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable error-family identifier used by the CLI for exit codes.
    pub fn family(&self) -> ErrorFamily {
        use Error::*;
        match self {
            DegreeTooLarge { .. }
            | InvalidWeight { .. }
            | InvalidActivation { .. }
            | QuadratureNotConverged { .. }
            | QuadratureInconsistent { .. }
            | NonFiniteCoefficient { .. } => ErrorFamily::Approximation,
            DegenerateLayer { .. } | NonFinite { .. } | EmptyDataset => ErrorFamily::Statistics,
            InvalidNu { .. }
            | InvalidDegreeSpace { .. }
            | ProfileFormat { .. }
            | ProfileNonMonotone { .. }
            | ProfileMissingDegree { .. }
            | DegreeNotInTable { .. } => ErrorFamily::Profile,
            InstanceTooLarge { .. } | BoundUnreachable { .. } | DegreeVectorLength { .. } => {
                ErrorFamily::Optimizer
            }
            ModelFormat { .. }
            | DatasetFormat { .. }
            | DimensionMismatch { .. }
            | LayerCountMismatch { .. }
            | SentinelDegree { .. } => ErrorFamily::Model,
            ReadFile { .. } | WriteFile { .. } | Csv(_) | Json(_) => ErrorFamily::Io,
        }
    }
}

/// Coarse error families, one process exit code each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Approximation,
    Statistics,
    Profile,
    Optimizer,
    Model,
    Io,
}

impl ErrorFamily {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorFamily::Approximation => 3,
            ErrorFamily::Statistics => 4,
            ErrorFamily::Profile => 5,
            ErrorFamily::Optimizer => 6,
            ErrorFamily::Model => 7,
            ErrorFamily::Io => 8,
        }
    }
}
