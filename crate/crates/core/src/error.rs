use thiserror::Error;

use crate::consensus::RoundRecord;

#[derive(Debug, Error)]
pub enum PoswError {
    #[error("invalid belief vector: {0}")]
    InvalidBelief(String),

    #[error("peer {peer} has {found} classes, expected {expected}")]
    ClassCountMismatch {
        peer: usize,
        expected: usize,
        found: usize,
    },

    #[error("consensus needs at least 2 peers, got {0}")]
    TooFewPeers(usize),

    #[error("duplicate vote from peer {0}")]
    DuplicatePeer(usize),

    #[error("no votes to tally")]
    EmptyMessages,

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Hitting the cap means the protocol loop is broken, not the input.
    #[error("round cap {cap} exceeded without convergence")]
    RoundCapExceeded {
        cap: usize,
        trace: Box<Vec<RoundRecord>>,
    },
}

pub type Result<T, E = PoswError> = std::result::Result<T, E>;
