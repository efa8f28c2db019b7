//! Seeded generator of synthetic ensembles with per-peer accuracy targets.
//!
//! For every sample a true label is drawn uniformly. Each peer picks a mode:
//! the true label with probability equal to its accuracy target, otherwise a
//! uniformly chosen wrong label. Its belief is a flat Dirichlet draw with the
//! largest component swapped onto the mode, then sharpened by raising every
//! component to the power `concentration` and renormalizing. The mode is
//! always the argmax, so argmax accuracy matches the target in expectation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::belief::{BeliefVector, ClassLabel};
use crate::dataset::{DatasetError, PredictionDataset, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSpec {
    pub n_samples: usize,
    pub n_peers: usize,
    pub n_classes: usize,
    /// One target per peer, each in `(1/K, 1]`.
    pub accuracies: Vec<f64>,
    /// Sharpness exponent; `f64::INFINITY` yields one-hot beliefs.
    pub concentration: f64,
    pub seed: u64,
}

impl SynthesisSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::Spec(m));
        if self.n_samples == 0 {
            return bad("n_samples must be positive".into());
        }
        if self.n_peers < 2 {
            return bad(format!("need at least 2 peers, got {}", self.n_peers));
        }
        if self.n_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.accuracies.len() != self.n_peers {
            return bad(format!(
                "{} accuracy targets for {} peers",
                self.accuracies.len(),
                self.n_peers
            ));
        }
        let chance = 1.0 / self.n_classes as f64;
        if let Some(a) = self.accuracies.iter().find(|&&a| !(a > chance && a <= 1.0)) {
            return bad(format!("accuracy target {a} not in ({chance}, 1]"));
        }
        if self.concentration.is_nan() || self.concentration <= 0.0 {
            return bad(format!(
                "concentration must be positive, got {}",
                self.concentration
            ));
        }
        Ok(())
    }
}

pub fn synthesize_ensemble(spec: &SynthesisSpec) -> Result<PredictionDataset, DatasetError> {
    spec.validate()?;
    let k = spec.n_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut samples = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let truth = rng.random_range(0..k);
        let beliefs = spec
            .accuracies
            .iter()
            .map(|&acc| {
                let mode = if rng.random_bool(acc) {
                    truth
                } else {
                    // uniform over the k-1 wrong labels
                    let r = rng.random_range(0..k - 1);
                    if r >= truth {
                        r + 1
                    } else {
                        r
                    }
                };
                peaked_belief(&mut rng, k, mode, spec.concentration)
            })
            .collect::<Result<Vec<_>, _>>()?;
        samples.push(Sample {
            id: i.to_string(),
            truth: Some(ClassLabel(truth)),
            beliefs,
        });
    }
    PredictionDataset::new(spec.n_peers, k, None, samples)
}

fn peaked_belief<R: Rng>(
    rng: &mut R,
    k: usize,
    mode: usize,
    concentration: f64,
) -> Result<BeliefVector, DatasetError> {
    let mut g: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let top = (0..k).fold(0, |best, j| if g[j] > g[best] { j } else { best });
    g.swap(top, mode);

    let weights: Vec<f64> = if concentration.is_infinite() {
        (0..k).map(|j| if j == mode { 1.0 } else { 0.0 }).collect()
    } else {
        // relative to the max, so the mode weighs exactly 1
        let log_max = g[mode].ln();
        g.iter()
            .enumerate()
            .map(|(j, &x)| {
                if j == mode {
                    1.0
                } else {
                    (concentration * (x.ln() - log_max)).exp()
                }
            })
            .collect()
    };
    let total: f64 = weights.iter().sum();
    BeliefVector::new(weights.into_iter().map(|w| w / total).collect())
        .map_err(|e| DatasetError::Spec(e.to_string()))
}
