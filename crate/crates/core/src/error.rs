//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by dataset handling, boundary geometry, training and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector with (near-)zero norm where a direction is required.
    #[error("vector norm below 1e-12; projection is degenerate")]
    ZeroVector,

    /// An anchor in a contrastive batch has no same-label partner.
    #[error("anchor {anchor} has no positive partner in the batch")]
    NoPositives { anchor: usize },

    /// A file does not conform to its declared format.
    #[error("format error: {0}")]
    Format(String),

    /// Vector or matrix dimensions disagree.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A class with no samples where at least one is required.
    #[error("class {0} has no samples")]
    EmptyClass(i32),

    /// A class whose samples have collapsed onto the centroid.
    #[error("class {0} is degenerate: mean distance to centroid below 1e-12")]
    DegenerateClass(i32),

    /// Fewer distinct known classes than a mixture requires.
    #[error("need {needed} distinct classes, dataset has {available}")]
    InsufficientClasses { needed: usize, available: usize },

    /// Positive batch and negative batch differ in size.
    #[error("negative batch size {negatives} does not match batch size {batch}")]
    SizeMismatch { batch: usize, negatives: usize },

    /// An eigenvalue at or below the singularity threshold.
    #[error("matrix is numerically singular (eigenvalue {0:.3e} <= 1e-12)")]
    SingularMatrix(f64),

    /// Coverage fraction too small for the class size.
    #[error("coverage fraction {cf} selects zero samples out of {samples}")]
    EmptyQuantile { cf: f64, samples: usize },

    /// A negative sample sharing the anchor's label.
    #[error("negative sample has the same label {0} as the anchor")]
    SameClassNegative(i32),

    /// Evaluation requested on an empty test set.
    #[error("test set is empty")]
    EmptyTestSet,

    /// A known-class ratio that selects no classes.
    #[error("known class ratio {0} selects no known classes")]
    NoKnownClasses(f64),

    /// A label outside the valid range for the boundary set.
    #[error("label {label} outside valid range [0, {classes})")]
    LabelOutOfRange { label: i32, classes: usize },

    /// A dataset with no samples where at least one is required.
    #[error("dataset is empty")]
    EmptyDataset,

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
