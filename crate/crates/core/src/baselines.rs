//! Voting rules PoSw is compared against: plurality vote, a BFT-style
//! two-thirds threshold and centralized soft voting.

use serde::{Deserialize, Serialize};

use crate::belief::{BeliefVector, ClassLabel};
use crate::consensus::{tally, VoteMessage};
use crate::error::{PoswError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineStatus {
    Decided,
    Tie,
    NoConsensus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaselineOutcome {
    Decided(ClassLabel),
    /// Several labels share the top count.
    Tie(Vec<ClassLabel>),
    NoConsensus,
}

impl BaselineOutcome {
    pub fn decision(&self) -> Option<ClassLabel> {
        match self {
            BaselineOutcome::Decided(l) => Some(*l),
            _ => None,
        }
    }

    pub fn status(&self) -> BaselineStatus {
        match self {
            BaselineOutcome::Decided(_) => BaselineStatus::Decided,
            BaselineOutcome::Tie(_) => BaselineStatus::Tie,
            BaselineOutcome::NoConsensus => BaselineStatus::NoConsensus,
        }
    }
}

/// Plurality vote. A shared top count is reported as a tie, not broken.
pub fn majority_vote(messages: &[VoteMessage]) -> Result<BaselineOutcome> {
    let counts = tally(messages)?;
    let max = counts
        .values()
        .copied()
        .max()
        .ok_or(PoswError::EmptyMessages)?;
    let leaders: Vec<ClassLabel> = counts
        .iter()
        .filter(|(_, &c)| c == max)
        .map(|(&l, _)| l)
        .collect();
    Ok(match leaders.as_slice() {
        [only] => BaselineOutcome::Decided(*only),
        _ => BaselineOutcome::Tie(leaders),
    })
}

/// Decides only when some label gathers at least `ceil(2N/3)` votes.
pub fn bft_two_thirds(messages: &[VoteMessage], n_peers: usize) -> Result<BaselineOutcome> {
    let counts = tally(messages)?;
    if counts.is_empty() {
        return Err(PoswError::EmptyMessages);
    }
    let threshold = (2 * n_peers).div_ceil(3);
    Ok(counts
        .iter()
        .find(|(_, &c)| c >= threshold)
        .map_or(BaselineOutcome::NoConsensus, |(&l, _)| {
            BaselineOutcome::Decided(l)
        }))
}

/// Argmax of the column sums of all beliefs, lowest index on exact ties.
pub fn soft_vote(beliefs: &[BeliefVector]) -> Result<ClassLabel> {
    let first = beliefs.first().ok_or(PoswError::TooFewPeers(0))?;
    let k = first.n_classes();
    let mut sums = vec![0.0; k];
    for (peer, b) in beliefs.iter().enumerate() {
        if b.n_classes() != k {
            return Err(PoswError::ClassCountMismatch {
                peer,
                expected: k,
                found: b.n_classes(),
            });
        }
        for (s, p) in sums.iter_mut().zip(b.probs()) {
            *s += p;
        }
    }
    let mut best = 0;
    for (i, &s) in sums.iter().enumerate().skip(1) {
        if s > sums[best] {
            best = i;
        }
    }
    Ok(ClassLabel(best))
}

/// First-round votes: every peer at its argmax.
pub fn first_round_votes(beliefs: &[BeliefVector]) -> Vec<VoteMessage> {
    beliefs
        .iter()
        .enumerate()
        .map(|(peer_id, b)| {
            let label = b.argmax();
            VoteMessage {
                peer_id,
                label,
                prob: b.prob(label),
            }
        })
        .collect()
}
