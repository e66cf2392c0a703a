use thiserror::Error;

/// Error type shared by every module in the crate.
///
/// The CLI maps variants onto stable exit codes: `Format` and `Io` are format
/// errors (2), `Divergence` is 4, and everything else is a numeric/contract
/// error (3). Usage errors never reach this type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// A value violates an operation's precondition.
    #[error("input error: {0}")]
    Input(String),

    /// A file or byte stream does not match its expected format.
    #[error("format error: {0}")]
    Format(String),

    /// A numeric operation cannot proceed (singular matrix, NaN, ...).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An operation was called in the wrong order (e.g. backward before
    /// forward).
    #[error("state error: {0}")]
    State(String),

    /// A network spec does not assemble into a valid layer chain.
    #[error("spec error: {0}")]
    Spec(String),

    /// Training produced a non-finite loss.
    #[error("divergence: {0}")]
    Divergence(String),

    /// A measurement has no defined value (constant neuron, zero
    /// descriptor).
    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
