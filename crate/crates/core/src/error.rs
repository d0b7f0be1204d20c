use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A stored object violates one of its invariants (normalization,
    /// non-negativity, no-signaling on load).
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    /// Two independent evaluations of the same quantity disagree. Indicates a
    /// bug, never bad input.
    #[error("internal identity check failed: {0}")]
    InternalIdentity(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("protocol aborted: {0}")]
    Abort(#[from] Abort),

    #[error("linear program: {0}")]
    Lp(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Typed reasons for a protocol run to end without emitting a key.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Abort {
    #[error("estimation set is empty")]
    EmptyEstimationSet,

    #[error("no raw-key pairs")]
    EmptyRawKey,

    #[error("error correction failed on {} block(s): {blocks:?}", blocks.len())]
    DecodeFailure { blocks: Vec<usize> },

    #[error("reconciled strings disagree on the public check hash")]
    VerificationFailed,
}
