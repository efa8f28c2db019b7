//! Lock-step simulation of the protocol as independent peer nodes.
//!
//! Each round has two phases separated by a barrier: every emitting node
//! hands its vote to the bus, then the bus delivers the full round log to
//! every inbox and each node computes the global best set on its own. Nodes
//! never read each other's state.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{BeliefVector, ClassLabel};
use crate::consensus::{
    compute_global_best, early_stop_label, initial_states, local_best, resolve_output,
    run_consensus, tally, ConsensusConfig, ConsensusResult, GlobalBestSet, PeerState, RoundRecord,
    VoteMessage,
};
use crate::error::PoswError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Protocol(#[from] PoswError),
    #[error("expected {expected} behaviors, got {found}")]
    BehaviorCount { expected: usize, found: usize },
    #[error("network needs at least one honest node")]
    NoHonestNode,
    #[error("unknown peer {0}")]
    UnknownPeer(usize),
    #[error("invalid behavior for peer {peer}: {reason}")]
    InvalidBehavior { peer: usize, reason: String },
    #[error("network already converged after round {0}")]
    AlreadyConverged(usize),
    #[error("honest nodes disagree on the global best set in round {0}")]
    ViewDivergence(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Behavior {
    Honest,
    /// Never broadcasts and never moves.
    Silent,
    /// Broadcasts the same pair every round regardless of its belief.
    FixedLiar {
        label: ClassLabel,
        prob: f64,
    },
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Behavior::Honest => write!(f, "honest"),
            Behavior::Silent => write!(f, "silent"),
            Behavior::FixedLiar { label, prob } => write!(f, "liar({label},{prob})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PeerNode {
    state: PeerState,
    inbox: Vec<VoteMessage>,
    behavior: Behavior,
    view: Option<GlobalBestSet>,
}

impl PeerNode {
    pub fn state(&self) -> &PeerState {
        &self.state
    }

    pub fn behavior(&self) -> Behavior {
        self.behavior
    }

    /// Global best set this node computed in the last round.
    pub fn view(&self) -> Option<&GlobalBestSet> {
        self.view.as_ref()
    }

    fn outgoing(&self) -> Option<VoteMessage> {
        match self.behavior {
            Behavior::Honest => Some(local_best(&self.state)),
            Behavior::Silent => None,
            Behavior::FixedLiar { label, prob } => Some(VoteMessage {
                peer_id: self.state.peer_id(),
                label,
                prob,
            }),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BroadcastBus {
    round_number: usize,
    delivered: Vec<Vec<VoteMessage>>,
}

impl BroadcastBus {
    pub fn round_number(&self) -> usize {
        self.round_number
    }

    /// Message log, one entry per completed round.
    pub fn delivered(&self) -> &[Vec<VoteMessage>] {
        &self.delivered
    }
}

#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub result: ConsensusResult,
    pub reference_match: bool,
    pub fault_summary: String,
}

#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<PeerNode>,
    bus: BroadcastBus,
    config: ConsensusConfig,
    beliefs: Vec<BeliefVector>,
    n_classes: usize,
    any_ties: bool,
    trace: Vec<RoundRecord>,
    outcome: Option<ConsensusResult>,
    faulted: bool,
}

pub fn spawn_network(
    beliefs: &[BeliefVector],
    config: &ConsensusConfig,
    behaviors: &[Behavior],
) -> Result<Network, HarnessError> {
    let (states, n_classes, any_ties) = initial_states(beliefs, config)?;
    if behaviors.len() != states.len() {
        return Err(HarnessError::BehaviorCount {
            expected: states.len(),
            found: behaviors.len(),
        });
    }
    for (peer, b) in behaviors.iter().enumerate() {
        check_behavior(peer, b, n_classes)?;
    }
    if !behaviors.contains(&Behavior::Honest) {
        return Err(HarnessError::NoHonestNode);
    }
    let nodes = states
        .into_iter()
        .zip(behaviors)
        .map(|(state, &behavior)| PeerNode {
            state,
            inbox: Vec::new(),
            behavior,
            view: None,
        })
        .collect();
    Ok(Network {
        nodes,
        bus: BroadcastBus::default(),
        config: config.clone(),
        beliefs: beliefs.to_vec(),
        n_classes,
        any_ties,
        trace: Vec::new(),
        outcome: None,
        faulted: behaviors.iter().any(|b| *b != Behavior::Honest),
    })
}

/// All-honest network.
pub fn spawn_honest(
    beliefs: &[BeliefVector],
    config: &ConsensusConfig,
) -> Result<Network, HarnessError> {
    spawn_network(beliefs, config, &vec![Behavior::Honest; beliefs.len()])
}

fn check_behavior(peer: usize, b: &Behavior, n_classes: usize) -> Result<(), HarnessError> {
    if let Behavior::FixedLiar { label, prob } = b {
        if label.0 >= n_classes {
            return Err(HarnessError::InvalidBehavior {
                peer,
                reason: format!("label {label} out of range for {n_classes} classes"),
            });
        }
        if !(0.0..=1.0).contains(prob) {
            return Err(HarnessError::InvalidBehavior {
                peer,
                reason: format!("probability {prob} outside [0, 1]"),
            });
        }
    }
    Ok(())
}

impl Network {
    pub fn nodes(&self) -> &[PeerNode] {
        &self.nodes
    }

    pub fn bus(&self) -> &BroadcastBus {
        &self.bus
    }

    pub fn trace(&self) -> &[RoundRecord] {
        &self.trace
    }

    pub fn is_converged(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn round_cap(&self) -> usize {
        self.config.round_cap(self.nodes.len(), self.n_classes)
    }

    /// Replaces a node's behavior from the next round on. Has no effect on
    /// a network that already converged.
    pub fn inject_fault(&mut self, peer_id: usize, behavior: Behavior) -> Result<(), HarnessError> {
        if peer_id >= self.nodes.len() {
            return Err(HarnessError::UnknownPeer(peer_id));
        }
        check_behavior(peer_id, &behavior, self.n_classes)?;
        let honest_left = self
            .nodes
            .iter()
            .enumerate()
            .any(|(i, n)| i != peer_id && n.behavior == Behavior::Honest);
        if behavior != Behavior::Honest && !honest_left {
            return Err(HarnessError::NoHonestNode);
        }
        if self.outcome.is_some() {
            return Ok(());
        }
        self.nodes[peer_id].behavior = behavior;
        if behavior != Behavior::Honest {
            self.faulted = true;
        }
        Ok(())
    }

    /// Executes one round: move, broadcast, deliver, decide.
    pub fn step_round(&mut self) -> Result<RoundRecord, HarnessError> {
        if self.outcome.is_some() {
            return Err(HarnessError::AlreadyConverged(self.bus.round_number));
        }
        let round = self.bus.round_number + 1;

        // Honest nodes act on the view they computed last round.
        let mut moved = Vec::new();
        for node in &mut self.nodes {
            if node.behavior != Behavior::Honest {
                continue;
            }
            if let Some(view) = &node.view {
                if !view.contains(node.state.current_label()) {
                    node.state.advance();
                    moved.push(node.state.peer_id());
                }
            }
        }

        // Send phase: the bus collects every outgoing vote before delivery.
        let mut log: Vec<VoteMessage> = self.nodes.iter().filter_map(PeerNode::outgoing).collect();
        log.sort_by_key(|m| m.peer_id);
        for node in &mut self.nodes {
            node.inbox.clear();
            node.inbox.extend_from_slice(&log);
        }

        // Decide phase: each node works from its own inbox only.
        for node in &mut self.nodes {
            node.view = Some(compute_global_best(&node.inbox, self.config.tie_tolerance)?);
        }
        let mut honest = self.nodes.iter().filter(|n| n.behavior == Behavior::Honest);
        let reference = honest
            .next()
            .and_then(|n| n.view.clone())
            .ok_or(HarnessError::NoHonestNode)?;
        if honest.any(|n| n.view.as_ref() != Some(&reference)) {
            return Err(HarnessError::ViewDivergence(round));
        }

        let counts = tally(&log)?;
        self.bus.round_number = round;
        self.bus.delivered.push(log.clone());
        let record = RoundRecord {
            round,
            moved,
            messages: log,
            counts,
            best: reference.clone(),
        };
        self.trace.push(record.clone());

        let converged = self
            .nodes
            .iter()
            .filter(|n| n.behavior == Behavior::Honest)
            .all(|n| reference.contains(n.state.current_label()));
        let early = if self.config.early_stop && !converged {
            // Threshold counts every configured peer, silent ones included.
            let threshold = self
                .config
                .early_stop_rule
                .threshold(self.nodes.len(), self.n_classes);
            early_stop_label(&reference, threshold)
        } else {
            None
        };
        let final_label = if converged {
            Some(resolve_output(&reference))
        } else {
            early
        };
        if let Some(final_label) = final_label {
            self.outcome = Some(ConsensusResult {
                final_label,
                rounds: round,
                early_stopped: !converged,
                index_tie_break: self.any_ties || (converged && !reference.is_singleton()),
                trace: self.trace.clone(),
            });
        }
        Ok(record)
    }

    pub fn run_to_convergence(&mut self) -> Result<SimulationReport, HarnessError> {
        let cap = self.round_cap();
        while self.outcome.is_none() {
            if self.bus.round_number >= cap {
                return Err(PoswError::RoundCapExceeded {
                    cap,
                    trace: Box::new(self.trace.clone()),
                }
                .into());
            }
            self.step_round()?;
        }
        let result = self.outcome.clone().expect("loop exits on outcome");
        let reference_match = match run_consensus(&self.beliefs, &self.config) {
            Ok(reference) => reference == result,
            Err(_) => false,
        };
        Ok(SimulationReport {
            result,
            reference_match,
            fault_summary: self.fault_summary(),
        })
    }

    pub fn fault_summary(&self) -> String {
        if !self.faulted {
            return "none".into();
        }
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.behavior != Behavior::Honest)
            .map(|(i, n)| format!("peer {i}: {}", n.behavior))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Header of the tab-separated trace format.
pub const TRACE_HEADER: &str = "round\tpeer_id\tlabel\tprob\tglobal_best\tmoved";

/// Renders a trace as one tab-separated line per `(round, message)`.
///
/// `global_best` is the round's set joined with `|`; `moved` is `1` when the
/// sender moved at the start of that round. Probabilities use the shortest
/// representation that parses back to the same `f64`.
pub fn export_trace(trace: &[RoundRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for rec in trace {
        let best = rec
            .best
            .labels
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("|");
        for m in &rec.messages {
            let moved = u8::from(rec.moved.contains(&m.peer_id));
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                rec.round, m.peer_id, m.label, m.prob, best, moved
            );
        }
    }
    out
}
