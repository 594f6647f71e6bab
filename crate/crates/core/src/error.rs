use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An operation received zero rows or an empty list where at least one is required.
    Empty(&'static str),
    /// Column (or row) count does not match what the model or operation expects.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    InvalidLabel { row: usize, label: usize, n_classes: usize },
    MissingClass(usize),
    NonFinite { row: usize, col: usize },
    /// A class has too few rows for stratification or k-fold partitioning.
    TooFewPerClass { class: usize, count: usize, needed: usize },
    InvalidConfig(String),
    /// Gradient descent diverged; the step size should be reduced.
    NonFiniteLoss { epoch: usize },
    Corrupt(String),
    UnsupportedVersion(u32),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Empty(what) => write!(f, "empty input: {what}"),
            Error::DimensionMismatch {
                what,
                expected,
                actual,
            } => write!(f, "{what}: expected {expected}, got {actual}"),
            Error::InvalidLabel {
                row,
                label,
                n_classes,
            } => write!(f, "row {row}: label {label} out of range for {n_classes} classes"),
            Error::MissingClass(c) => write!(f, "class id {c} has no samples"),
            Error::NonFinite { row, col } => {
                write!(f, "non-finite feature value at row {row}, column {col}")
            }
            Error::TooFewPerClass {
                class,
                count,
                needed,
            } => write!(
                f,
                "class {class} has {count} samples, at least {needed} are needed"
            ),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::NonFiniteLoss { epoch } => write!(
                f,
                "loss became non-finite at epoch {epoch}; use a smaller step size"
            ),
            Error::Corrupt(msg) => write!(f, "corrupted model: {msg}"),
            Error::UnsupportedVersion(v) => write!(f, "unsupported model format version {v}"),
        }
    }
}

impl core::error::Error for Error {}
