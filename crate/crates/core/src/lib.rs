//! Proof-of-Swarm (PoSw) consensus for ensembles of peer classifiers.
//!
//! Each peer holds a fixed probability distribution over `K` class labels.
//! Peers repeatedly broadcast their current label with its confidence; those
//! outside the global best set step down their own preference order until
//! every peer sits inside it. Ties on vote count are settled by summed
//! confidence.
//!
//! - [`consensus`]: the centralized reference protocol.
//! - [`harness`]: the same protocol as independent nodes on a lock-step
//!   broadcast bus, with silent and lying peers.
//! - [`baselines`]: plurality, two-thirds threshold and soft voting.
//! - [`dataset`] and [`synth`]: prediction-matrix files and a seeded
//!   synthetic ensemble generator.
//! - [`experiment`]: batch evaluation, summaries and result files.

pub mod baselines;
pub mod belief;
pub mod consensus;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod harness;
pub mod synth;

pub use belief::{
    derive_preference_order, BeliefVector, ClassLabel, LocalTiePolicy, PreferenceOrder,
};
pub use consensus::{
    run_consensus, ConsensusConfig, ConsensusResult, EarlyStopRule, GlobalBestSet, PeerState,
    RoundRecord, VoteMessage,
};
pub use error::{PoswError, Result};
