//! Class labels, per-peer belief vectors and the preference order derived
//! from them.

use std::cmp::Ordering;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PoswError, Result};

/// Maximum distance of a belief's total mass from 1.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Index of a class in `[0, K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassLabel(pub usize);

impl ClassLabel {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for ClassLabel {
    fn from(index: usize) -> Self {
        ClassLabel(index)
    }
}

/// A peer's static probability distribution over `K >= 2` classes.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct BeliefVector {
    probs: Vec<f64>,
}

impl BeliefVector {
    /// Validates `probs` as a point on the probability simplex.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_simplex(&probs).map_err(PoswError::InvalidBelief)?;
        Ok(Self { probs })
    }

    /// Like [`BeliefVector::new`], but rescales a non-negative vector with
    /// positive mass onto the simplex instead of rejecting a bad total.
    pub fn renormalized(mut probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(PoswError::InvalidBelief(format!(
                "need at least 2 classes, got {}",
                probs.len()
            )));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(PoswError::InvalidBelief(format!(
                "entry {i} is {p}, cannot renormalize"
            )));
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(PoswError::InvalidBelief("zero total mass".into()));
        }
        for p in &mut probs {
            *p /= total;
        }
        Self::new(probs)
    }

    pub fn n_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, label: ClassLabel) -> f64 {
        self.probs[label.0]
    }

    /// Highest-probability label, lowest index on ties.
    pub fn argmax(&self) -> ClassLabel {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        ClassLabel(best)
    }

    /// True when two classes carry exactly the same probability.
    pub fn has_ties(&self) -> bool {
        let mut sorted = self.probs.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        sorted.windows(2).any(|w| w[0] == w[1])
    }
}

impl<'de> Deserialize<'de> for BeliefVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let probs = Vec::<f64>::deserialize(d)?;
        BeliefVector::new(probs).map_err(serde::de::Error::custom)
    }
}

/// Checks entry range and total mass; the message names the offending entry.
pub fn validate_simplex(probs: &[f64]) -> std::result::Result<(), String> {
    if probs.len() < 2 {
        return Err(format!("need at least 2 classes, got {}", probs.len()));
    }
    for (i, &p) in probs.iter().enumerate() {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(format!("entry {i} is {p}, outside [0, 1]"));
        }
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(format!(
            "entries sum to {total}, more than {SIMPLEX_TOLERANCE} away from 1"
        ));
    }
    Ok(())
}

/// How a peer orders labels that carry identical probability.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalTiePolicy {
    #[default]
    LowestIndex,
    SeededRandom,
}

/// Labels sorted by descending probability.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PreferenceOrder {
    order: Vec<ClassLabel>,
}

impl PreferenceOrder {
    pub fn order(&self) -> &[ClassLabel] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn at(&self, cursor: usize) -> ClassLabel {
        self.order[cursor]
    }
}

/// Descending probability, ascending index among equal probabilities.
pub fn derive_preference_order(belief: &BeliefVector) -> PreferenceOrder {
    let probs = belief.probs();
    let mut order: Vec<ClassLabel> = (0..probs.len()).map(ClassLabel).collect();
    order.sort_by(|a, b| match probs[b.0].total_cmp(&probs[a.0]) {
        Ordering::Equal => a.0.cmp(&b.0),
        other => other,
    });
    PreferenceOrder { order }
}

/// Derives the order under `policy`. With [`LocalTiePolicy::SeededRandom`]
/// each run of equal probabilities is shuffled using `rng`.
pub fn derive_preference_order_with<R: Rng + ?Sized>(
    belief: &BeliefVector,
    policy: LocalTiePolicy,
    rng: &mut R,
) -> PreferenceOrder {
    let mut pref = derive_preference_order(belief);
    if policy == LocalTiePolicy::SeededRandom {
        let probs = belief.probs();
        let mut start = 0;
        while start < pref.order.len() {
            let p = probs[pref.order[start].0];
            let end = pref.order[start..]
                .iter()
                .position(|l| probs[l.0] != p)
                .map_or(pref.order.len(), |off| start + off);
            pref.order[start..end].shuffle(rng);
            start = end;
        }
    }
    pref
}
