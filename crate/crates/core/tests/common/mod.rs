//! Random instance generation shared by the integration suites.
#![allow(dead_code)]

use posw_core::BeliefVector;
use proptest::prelude::*;
use rand::Rng;

/// Beliefs for `n` peers over `k` classes. With `quantized`, weights are
/// small integers, so exact ties between entries are common.
pub fn random_beliefs<R: Rng>(
    rng: &mut R,
    k: usize,
    n: usize,
    quantized: bool,
) -> Vec<BeliefVector> {
    (0..n)
        .map(|_| {
            let mut w: Vec<f64> = (0..k)
                .map(|_| {
                    if quantized {
                        rng.random_range(0..4u32) as f64
                    } else {
                        -(1.0 - rng.random::<f64>()).ln()
                    }
                })
                .collect();
            if w.iter().all(|&x| x == 0.0) {
                w[rng.random_range(0..k)] = 1.0;
            }
            BeliefVector::renormalized(w).expect("positive weights")
        })
        .collect()
}

/// A random instance with `k` in 2..=8 and `n` in 2..=9.
pub fn random_instance<R: Rng>(rng: &mut R) -> Vec<BeliefVector> {
    let k = rng.random_range(2..=8);
    let n = rng.random_range(2..=9);
    let quantized = rng.random_bool(0.3);
    random_beliefs(rng, k, n, quantized)
}

/// Relabels every belief: class `c` becomes `perm[c]`.
pub fn permute_classes(beliefs: &[BeliefVector], perm: &[usize]) -> Vec<BeliefVector> {
    beliefs
        .iter()
        .map(|b| {
            let mut out = vec![0.0; perm.len()];
            for (c, &p) in b.probs().iter().enumerate() {
                out[perm[c]] = p;
            }
            BeliefVector::new(out).expect("permutation keeps the simplex")
        })
        .collect()
}

pub fn belief(probs: &[f64]) -> BeliefVector {
    BeliefVector::new(probs.to_vec()).unwrap()
}

/// Class order N, S, V, F, Q.
pub fn walkthrough_one() -> Vec<BeliefVector> {
    vec![
        belief(&[0.40, 0.06, 0.12, 0.18, 0.24]),
        belief(&[0.38, 0.07, 0.10, 0.20, 0.25]),
        belief(&[0.18, 0.06, 0.36, 0.10, 0.30]),
        belief(&[0.30, 0.07, 0.10, 0.18, 0.35]),
        belief(&[0.31, 0.08, 0.12, 0.33, 0.16]),
    ]
}

pub fn walkthrough_two() -> Vec<BeliefVector> {
    vec![
        belief(&[0.30, 0.10, 0.15, 0.25, 0.20]),
        belief(&[0.28, 0.10, 0.12, 0.24, 0.26]),
        belief(&[0.15, 0.08, 0.35, 0.30, 0.12]),
        belief(&[0.10, 0.07, 0.08, 0.35, 0.40]),
        belief(&[0.12, 0.34, 0.08, 0.16, 0.30]),
    ]
}

fn weights(quantized: bool) -> BoxedStrategy<f64> {
    if quantized {
        (0u32..4).prop_map(f64::from).boxed()
    } else {
        (1e-3f64..1.0).boxed()
    }
}

/// Proptest counterpart of [`random_instance`]; `quantized` picks small
/// integer weights, which make ties common.
pub fn instance_strategy(
    quantized: impl Strategy<Value = bool>,
) -> impl Strategy<Value = Vec<BeliefVector>> {
    (2usize..=8, 2usize..=9, quantized)
        .prop_flat_map(|(k, n, q)| prop::collection::vec(prop::collection::vec(weights(q), k), n))
        .prop_map(|rows| {
            rows.into_iter()
                .map(|mut w| {
                    if w.iter().all(|&x| x == 0.0) {
                        w[0] = 1.0;
                    }
                    BeliefVector::renormalized(w).unwrap()
                })
                .collect()
        })
}
