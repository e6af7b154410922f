use thiserror::Error;

/// Error type shared by every fallible operation in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at layer {layer}: expected {expected}, got {actual}")]
    ShapeMismatch {
        layer: usize,
        expected: String,
        actual: String,
    },

    #[error("invalid tensor shape: {0}")]
    InvalidShape(String),

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("target index {index} out of range for {len} outputs")]
    TargetOutOfRange { index: usize, len: usize },

    #[error("empty input to {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("split of {size} samples cannot realize minority groups at correlation {rho} (expected minority count {expected:.2} per cell)")]
    MinorityUnrealizable { size: usize, rho: f64, expected: f64 },

    #[error("attribute kind {0:?} not present in dataset")]
    UnknownAttribute(String),

    #[error("degenerate affinity: median pairwise distance is zero")]
    DegenerateAffinity,

    #[error("{what} did not converge within {iters} iterations")]
    NonConvergence { what: &'static str, iters: usize },

    #[error("class {class} has {size} samples, need at least {min}")]
    ClassTooSmall {
        class: usize,
        size: usize,
        min: usize,
    },

    #[error("group {group} has {size} samples, need at least {min} for {what}")]
    GroupTooSmall {
        group: usize,
        size: usize,
        min: usize,
        what: &'static str,
    },

    #[error("all retraining groups are empty")]
    NoGroups,

    #[error("{stage} requires an upstream artifact: {missing} (run `{run_first}` first)")]
    MissingArtifact {
        stage: &'static str,
        missing: String,
        run_first: &'static str,
    },

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed {format} data at {path}: {reason}")]
    Format {
        format: &'static str,
        path: String,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable category for CLI exit diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } | Error::InvalidShape(_) => "shape",
            Error::NonFinite(_) => "numeric",
            Error::LabelOutOfRange { .. } | Error::TargetOutOfRange { .. } => "label",
            Error::Empty(_) => "empty-input",
            Error::InvalidConfig(_) => "config",
            Error::MinorityUnrealizable { .. } => "dataset-size",
            Error::UnknownAttribute(_) => "attribute",
            Error::DegenerateAffinity => "degenerate-affinity",
            Error::NonConvergence { .. } => "non-convergence",
            Error::ClassTooSmall { .. } | Error::GroupTooSmall { .. } | Error::NoGroups => {
                "group-size"
            }
            Error::Sample { source, .. } => source.category(),
            Error::MissingArtifact { .. } => "missing-artifact",
            Error::Format { .. } => "format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
