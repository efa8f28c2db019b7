//! Centralized reference implementation of the Proof-of-Swarm protocol.
//!
//! Every peer holds a static belief vector. A round consists of:
//!
//! 1. peers whose label fell outside the previous global best set move to
//!    their next-preferred label (cycling back to the top after the last);
//! 2. every peer broadcasts its current `(label, prob)` pair;
//! 3. votes are tallied, and the global best set is the max-vote label,
//!    tie-broken by summed confidence, possibly left plural on exact ties.
//!
//! The run ends when every peer's label lies in the global best set, or
//! earlier when one label holds a strict majority of all peers' votes.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{
    derive_preference_order_with, BeliefVector, ClassLabel, LocalTiePolicy, PreferenceOrder,
};
use crate::error::{PoswError, Result};

/// Vote count per label. Labels nobody voted for are absent.
pub type Tally = BTreeMap<ClassLabel, usize>;

/// A peer's current proposal within its fixed preference order.
#[derive(Debug, Clone, PartialEq)]
pub struct PeerState {
    peer_id: usize,
    belief: BeliefVector,
    pref: PreferenceOrder,
    cursor: usize,
}

impl PeerState {
    /// A peer positioned at its local best.
    pub fn new(peer_id: usize, belief: BeliefVector, pref: PreferenceOrder) -> Self {
        debug_assert_eq!(belief.n_classes(), pref.len());
        Self {
            peer_id,
            belief,
            pref,
            cursor: 0,
        }
    }

    pub fn peer_id(&self) -> usize {
        self.peer_id
    }

    pub fn belief(&self) -> &BeliefVector {
        &self.belief
    }

    pub fn pref(&self) -> &PreferenceOrder {
        &self.pref
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn current_label(&self) -> ClassLabel {
        self.pref.at(self.cursor)
    }

    pub fn current_prob(&self) -> f64 {
        self.belief.prob(self.current_label())
    }

    /// Steps to the next-preferred label, wrapping to the top after the last.
    pub fn advance(&mut self) {
        self.cursor = (self.cursor + 1) % self.pref.len();
    }
}

/// The `(label, prob)` pair a peer broadcasts each round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteMessage {
    pub peer_id: usize,
    pub label: ClassLabel,
    pub prob: f64,
}

/// Labels currently considered globally best.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalBestSet {
    /// Sorted ascending, never empty.
    pub labels: Vec<ClassLabel>,
    pub max_votes: usize,
    /// Confidence sums of the max-vote labels, present when more than one
    /// label reached `max_votes`.
    pub prob_sums: Option<BTreeMap<ClassLabel, f64>>,
}

impl GlobalBestSet {
    pub fn contains(&self, label: ClassLabel) -> bool {
        self.labels.binary_search(&label).is_ok()
    }

    pub fn is_singleton(&self) -> bool {
        self.labels.len() == 1
    }
}

/// Vote threshold that triggers an early stop.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EarlyStopRule {
    /// `floor(N/2) + 1` votes out of N peers.
    #[default]
    PeerMajority,
    /// `floor(K/2) + 1` votes, K being the class count. Not guaranteed to
    /// agree with the converged result; exploration only.
    ClassCountLiteral,
}

impl EarlyStopRule {
    pub fn threshold(self, n_peers: usize, n_classes: usize) -> usize {
        match self {
            EarlyStopRule::PeerMajority => n_peers / 2 + 1,
            EarlyStopRule::ClassCountLiteral => n_classes / 2 + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    pub early_stop: bool,
    pub early_stop_rule: EarlyStopRule,
    /// Round cap is `factor * K * (K - 1)`; `None` uses the peer count.
    pub round_cap_factor: Option<usize>,
    pub tie_tolerance: f64,
    pub rng_seed: Option<u64>,
    pub local_tie_policy: LocalTiePolicy,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            early_stop: true,
            early_stop_rule: EarlyStopRule::PeerMajority,
            round_cap_factor: None,
            tie_tolerance: 1e-9,
            rng_seed: None,
            local_tie_policy: LocalTiePolicy::LowestIndex,
        }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.round_cap_factor == Some(0) {
            return Err(PoswError::InvalidConfig(
                "round_cap_factor must be >= 1".into(),
            ));
        }
        if !(self.tie_tolerance >= 0.0 && self.tie_tolerance.is_finite()) {
            return Err(PoswError::InvalidConfig(format!(
                "tie_tolerance must be finite and >= 0, got {}",
                self.tie_tolerance
            )));
        }
        Ok(())
    }

    pub fn round_cap(&self, n_peers: usize, n_classes: usize) -> usize {
        let factor = self.round_cap_factor.unwrap_or(n_peers).max(1);
        factor * n_classes * (n_classes - 1)
    }
}

/// One broadcast-tally cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based.
    pub round: usize,
    /// Peers that moved at the start of this round, before broadcasting.
    pub moved: Vec<usize>,
    /// Sorted by peer id.
    pub messages: Vec<VoteMessage>,
    pub counts: Tally,
    pub best: GlobalBestSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusResult {
    pub final_label: ClassLabel,
    pub rounds: usize,
    pub early_stopped: bool,
    /// Set when some outcome may have hinged on label index rather than
    /// probabilities: a belief with tied entries, or a plural final set.
    pub index_tie_break: bool,
    pub trace: Vec<RoundRecord>,
}

pub fn local_best(state: &PeerState) -> VoteMessage {
    VoteMessage {
        peer_id: state.peer_id(),
        label: state.current_label(),
        prob: state.current_prob(),
    }
}

/// Counts votes per label. Each peer may vote once.
pub fn tally(messages: &[VoteMessage]) -> Result<Tally> {
    let mut seen = std::collections::BTreeSet::new();
    let mut counts = Tally::new();
    for m in messages {
        if !seen.insert(m.peer_id) {
            return Err(PoswError::DuplicatePeer(m.peer_id));
        }
        *counts.entry(m.label).or_default() += 1;
    }
    Ok(counts)
}

/// Sum of the confidences attached to votes for `label`.
pub fn probability_sum(label: ClassLabel, messages: &[VoteMessage]) -> f64 {
    messages
        .iter()
        .filter(|m| m.label == label)
        .map(|m| m.prob)
        .sum()
}

pub fn compute_global_best(messages: &[VoteMessage], tie_tolerance: f64) -> Result<GlobalBestSet> {
    let counts = tally(messages)?;
    let max_votes = counts
        .values()
        .copied()
        .max()
        .ok_or(PoswError::EmptyMessages)?;
    let leaders: Vec<ClassLabel> = counts
        .iter()
        .filter(|(_, &c)| c == max_votes)
        .map(|(&l, _)| l)
        .collect();

    if leaders.len() == 1 {
        return Ok(GlobalBestSet {
            labels: leaders,
            max_votes,
            prob_sums: None,
        });
    }

    let sums: BTreeMap<ClassLabel, f64> = leaders
        .iter()
        .map(|&l| (l, probability_sum(l, messages)))
        .collect();
    let top = sums.values().copied().fold(f64::NEG_INFINITY, f64::max);
    // Sums within tolerance of the top one count as tied with it.
    let labels = leaders
        .into_iter()
        .filter(|l| top - sums[l] <= tie_tolerance)
        .collect();
    Ok(GlobalBestSet {
        labels,
        max_votes,
        prob_sums: Some(sums),
    })
}

/// Returns the peer advanced by one position in its preference order.
/// Callers only move peers whose label lies outside the global best set.
pub fn move_peer(state: &PeerState) -> PeerState {
    let mut next = state.clone();
    next.advance();
    next
}

pub fn check_converged(states: &[PeerState], best: &GlobalBestSet) -> bool {
    states.iter().all(|s| best.contains(s.current_label()))
}

/// The label holding a strict majority of `n_peers` votes, if any.
pub fn check_early_stop(counts: &Tally, n_peers: usize) -> Option<ClassLabel> {
    let threshold = n_peers / 2 + 1;
    counts
        .iter()
        .find(|(_, &c)| c >= threshold)
        .map(|(&l, _)| l)
}

/// Early-stop decision under an arbitrary threshold: the set must be a
/// single label whose vote count reaches `threshold`.
pub fn early_stop_label(best: &GlobalBestSet, threshold: usize) -> Option<ClassLabel> {
    (best.is_singleton() && best.max_votes >= threshold).then(|| best.labels[0])
}

/// Picks the output label; plural sets resolve to the lowest index.
pub fn resolve_output(best: &GlobalBestSet) -> ClassLabel {
    best.labels[0]
}

/// Validates the beliefs and builds every peer at its local best.
///
/// Returns the states, the class count, and whether any belief had tied
/// entries.
pub fn initial_states(
    beliefs: &[BeliefVector],
    config: &ConsensusConfig,
) -> Result<(Vec<PeerState>, usize, bool)> {
    config.validate()?;
    if beliefs.len() < 2 {
        return Err(PoswError::TooFewPeers(beliefs.len()));
    }
    let n_classes = beliefs[0].n_classes();
    if let Some((peer, b)) = beliefs
        .iter()
        .enumerate()
        .find(|(_, b)| b.n_classes() != n_classes)
    {
        return Err(PoswError::ClassCountMismatch {
            peer,
            expected: n_classes,
            found: b.n_classes(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed.unwrap_or(0));
    let mut any_ties = false;
    let states = beliefs
        .iter()
        .enumerate()
        .map(|(peer_id, belief)| {
            any_ties |= belief.has_ties();
            let pref = derive_preference_order_with(belief, config.local_tie_policy, &mut rng);
            PeerState::new(peer_id, belief.clone(), pref)
        })
        .collect();
    Ok((states, n_classes, any_ties))
}

/// Runs the protocol to convergence (or early stop) and returns the full
/// per-round trace.
pub fn run_consensus(
    beliefs: &[BeliefVector],
    config: &ConsensusConfig,
) -> Result<ConsensusResult> {
    let (mut states, n_classes, any_ties) = initial_states(beliefs, config)?;
    let n_peers = states.len();
    let cap = config.round_cap(n_peers, n_classes);
    let threshold = config.early_stop_rule.threshold(n_peers, n_classes);

    let mut trace: Vec<RoundRecord> = Vec::new();
    for round in 1..=cap {
        let mut moved = Vec::new();
        if let Some(prev) = trace.last() {
            for state in states.iter_mut() {
                if !prev.best.contains(state.current_label()) {
                    state.advance();
                    moved.push(state.peer_id());
                }
            }
        }

        let messages: Vec<VoteMessage> = states.iter().map(local_best).collect();
        let counts = tally(&messages)?;
        let best = compute_global_best(&messages, config.tie_tolerance)?;
        let converged = check_converged(&states, &best);
        let early = if config.early_stop && !converged {
            early_stop_label(&best, threshold)
        } else {
            None
        };

        let final_label = match (converged, early) {
            (true, _) => Some(resolve_output(&best)),
            (false, Some(label)) => Some(label),
            (false, None) => None,
        };
        let plural = !best.is_singleton();
        trace.push(RoundRecord {
            round,
            moved,
            messages,
            counts,
            best,
        });

        if let Some(final_label) = final_label {
            return Ok(ConsensusResult {
                final_label,
                rounds: round,
                early_stopped: !converged,
                index_tie_break: any_ties || (converged && plural),
                trace,
            });
        }
    }

    Err(PoswError::RoundCapExceeded {
        cap,
        trace: Box::new(trace),
    })
}
