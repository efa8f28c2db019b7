//! End-to-end acceptance checks. Runs as a plain binary (`harness = false`)
//! so the per-criterion verdict lines always reach the console.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{
    belief, instance_strategy, permute_classes, random_beliefs, walkthrough_one, walkthrough_two,
};
use posw_core::baselines::{bft_two_thirds, first_round_votes, majority_vote, BaselineOutcome};
use posw_core::consensus::{probability_sum, tally};
use posw_core::experiment::{all_methods, evaluate, summarize, EvalOptions, Method};
use posw_core::harness::spawn_honest;
use posw_core::synth::{synthesize_ensemble, SynthesisSpec};
use posw_core::{
    run_consensus, BeliefVector, ClassLabel, ConsensusConfig, ConsensusResult, LocalTiePolicy,
    PoswError, VoteMessage,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Verdict = Result<String, String>;

fn no_early_stop() -> ConsensusConfig {
    ConsensusConfig {
        early_stop: false,
        ..Default::default()
    }
}

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn round_view(
    r: &ConsensusResult,
    round: usize,
) -> (Vec<usize>, Vec<usize>, BTreeMap<usize, usize>, Vec<usize>) {
    let rec = &r.trace[round - 1];
    (
        rec.moved.clone(),
        rec.messages.iter().map(|m| m.label.0).collect(),
        rec.counts.iter().map(|(l, &c)| (l.0, c)).collect(),
        rec.best.labels.iter().map(|l| l.0).collect(),
    )
}

// classes N S V F Q
fn golden_walkthroughs() -> Verdict {
    let cfg = ConsensusConfig::default();
    let one = run_consensus(&walkthrough_one(), &cfg).map_err(|e| e.to_string())?;
    ensure(
        one.final_label == ClassLabel(0) && one.rounds == 2 && one.early_stopped,
        || {
            format!(
                "walkthrough 1 gave {} in {} rounds",
                one.final_label, one.rounds
            )
        },
    )?;
    let expected_one = [
        (
            vec![],
            vec![0, 0, 2, 4, 3],
            BTreeMap::from([(0, 2), (2, 1), (3, 1), (4, 1)]),
            vec![0],
        ),
        (
            vec![2, 3, 4],
            vec![0, 0, 4, 0, 0],
            BTreeMap::from([(0, 4), (4, 1)]),
            vec![0],
        ),
    ];
    for (i, want) in expected_one.iter().enumerate() {
        let got = round_view(&one, i + 1);
        ensure(&got == want, || {
            format!("walkthrough 1 round {}: {got:?}", i + 1)
        })?;
    }

    let two = run_consensus(&walkthrough_two(), &cfg).map_err(|e| e.to_string())?;
    ensure(
        two.final_label == ClassLabel(3) && two.rounds == 3 && two.early_stopped,
        || {
            format!(
                "walkthrough 2 gave {} in {} rounds",
                two.final_label, two.rounds
            )
        },
    )?;
    let expected_two = [
        (
            vec![],
            vec![0, 0, 2, 4, 1],
            BTreeMap::from([(0, 2), (1, 1), (2, 1), (4, 1)]),
            vec![0],
        ),
        (
            vec![2, 3, 4],
            vec![0, 0, 3, 3, 4],
            BTreeMap::from([(0, 2), (3, 2), (4, 1)]),
            vec![3],
        ),
        (
            vec![0, 1, 4],
            vec![3, 4, 3, 3, 3],
            BTreeMap::from([(3, 4), (4, 1)]),
            vec![3],
        ),
    ];
    for (i, want) in expected_two.iter().enumerate() {
        let got = round_view(&two, i + 1);
        ensure(&got == want, || {
            format!("walkthrough 2 round {}: {got:?}", i + 1)
        })?;
    }
    let sums = two.trace[1]
        .best
        .prob_sums
        .as_ref()
        .ok_or("round 2 tie not resolved by sums")?;
    let (n, f) = (sums[&ClassLabel(0)], sums[&ClassLabel(3)]);
    ensure((n - 0.58).abs() < 1e-12 && (f - 0.65).abs() < 1e-12, || {
        format!("round 2 sums N={n} F={f}")
    })?;
    Ok("N in 2 rounds, F in 3 rounds, traces and tie sums exact".into())
}

const PER_COMBO: usize = 1800;

struct SuiteOutcome {
    instances: usize,
    max_rounds: BTreeMap<(usize, usize), usize>,
    failures: Vec<String>,
    early_stop_mismatches: Vec<String>,
}

fn instance_seed(k: usize, n: usize, i: usize) -> u64 {
    ((k as u64) << 48) ^ ((n as u64) << 40) ^ i as u64
}

fn instance(k: usize, n: usize, i: usize) -> Vec<BeliefVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(k, n, i));
    let quantized = rng.random_bool(0.3);
    random_beliefs(&mut rng, k, n, quantized)
}

fn artifact_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

/// Writes a counterexample that can be replayed with `posw run`.
fn save_counterexample(
    tag: &str,
    k: usize,
    n: usize,
    i: usize,
    beliefs: &[BeliefVector],
    why: &str,
) -> String {
    let dir = artifact_dir();
    let _ = std::fs::create_dir_all(&dir);
    let path = dir.join(format!("{tag}_k{k}_n{n}_{i}.json"));
    let doc = serde_json::json!({
        "n_peers": n,
        "n_classes": k,
        "samples": [{
            "id": format!("seed-{}", instance_seed(k, n, i)),
            "beliefs": beliefs.iter().map(|b| b.probs().to_vec()).collect::<Vec<_>>(),
        }],
        "reason": why,
    });
    let _ = std::fs::write(
        &path,
        serde_json::to_string_pretty(&doc).unwrap_or_default(),
    );
    format!("K={k} N={n} #{i}: {why} (saved to {})", path.display())
}

fn random_suite() -> SuiteOutcome {
    let combos: Vec<(usize, usize)> = (2..=8).flat_map(|k| (2..=9).map(move |n| (k, n))).collect();
    let per_combo: Vec<_> = combos
        .par_iter()
        .map(|&(k, n)| {
            let mut max_rounds = 0;
            let mut failures = Vec::new();
            let mut mismatches = Vec::new();
            for i in 0..PER_COMBO {
                let beliefs = instance(k, n, i);
                let full = match run_consensus(&beliefs, &no_early_stop()) {
                    Ok(r) => r,
                    Err(PoswError::RoundCapExceeded { cap, .. }) => {
                        failures.push(save_counterexample(
                            "cap",
                            k,
                            n,
                            i,
                            &beliefs,
                            &format!("cap {cap} hit"),
                        ));
                        continue;
                    }
                    Err(e) => {
                        failures.push(format!("K={k} N={n} #{i}: {e}"));
                        continue;
                    }
                };
                max_rounds = max_rounds.max(full.rounds);
                if full.rounds > k * (k - 1) {
                    let why = format!("{} rounds > K(K-1)", full.rounds);
                    failures.push(save_counterexample("bound", k, n, i, &beliefs, &why));
                }
                match run_consensus(&beliefs, &ConsensusConfig::default()) {
                    Ok(early) if early.final_label == full.final_label => {}
                    Ok(early) => {
                        let why = format!(
                            "early stop {} vs full {}",
                            early.final_label, full.final_label
                        );
                        mismatches.push(save_counterexample("early", k, n, i, &beliefs, &why));
                    }
                    Err(e) => mismatches.push(format!("K={k} N={n} #{i}: {e}")),
                }
            }
            ((k, n), max_rounds, failures, mismatches)
        })
        .collect();
    let mut out = SuiteOutcome {
        instances: combos.len() * PER_COMBO,
        max_rounds: BTreeMap::new(),
        failures: Vec::new(),
        early_stop_mismatches: Vec::new(),
    };
    for (combo, max, failures, mismatches) in per_combo {
        out.max_rounds.insert(combo, max);
        out.failures.extend(failures);
        out.early_stop_mismatches.extend(mismatches);
    }
    out
}

fn convergence_bound(suite: &SuiteOutcome, elapsed: Duration) -> Verdict {
    let max55 = suite.max_rounds[&(5, 5)];
    let overall = suite
        .max_rounds
        .iter()
        .map(|(&(k, _), &m)| (m, k))
        .max()
        .unwrap_or_default();
    ensure(suite.failures.is_empty(), || {
        format!(
            "{} failures; first: {}",
            suite.failures.len(),
            suite.failures[0]
        )
    })?;
    ensure(max55 <= 20, || format!("K=5 N=5 needed {max55} rounds"))?;
    ensure(elapsed < Duration::from_secs(120), || {
        format!("took {elapsed:.1?}")
    })?;
    Ok(format!(
        "{} instances terminated; max rounds at K=5,N=5 is {max55} (bound 20); overall max {} at K={}; {elapsed:.1?}",
        suite.instances, overall.0, overall.1
    ))
}

fn early_stop_soundness(suite: &SuiteOutcome) -> Verdict {
    ensure(suite.early_stop_mismatches.is_empty(), || {
        format!(
            "{} mismatches; first: {}",
            suite.early_stop_mismatches.len(),
            suite.early_stop_mismatches[0]
        )
    })?;
    Ok(format!(
        "labels agree on {} of {} instances",
        suite.instances, suite.instances
    ))
}

fn harness_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for run in 0..1000 {
        let beliefs = common::random_instance(&mut rng);
        let config = ConsensusConfig {
            early_stop: rng.random_bool(0.5),
            ..Default::default()
        };
        let reference = run_consensus(&beliefs, &config).map_err(|e| e.to_string())?;
        let report = spawn_honest(&beliefs, &config)
            .and_then(|mut net| net.run_to_convergence())
            .map_err(|e| format!("run {run}: {e}"))?;
        ensure(
            report.result.trace == reference.trace && report.reference_match,
            || format!("run {run}: harness trace differs from reference"),
        )?;
    }
    Ok("1000 fault-free runs, traces identical".into())
}

fn ensemble_benefit(table: &mut String) -> Verdict {
    let start = Instant::now();
    let mut wins = 0;
    let mut all_records = Vec::new();
    let methods = all_methods(5);
    for seed in 0..10 {
        let spec = SynthesisSpec {
            n_samples: 1000,
            n_peers: 5,
            n_classes: 5,
            accuracies: vec![0.87, 0.87, 0.86, 0.88, 0.84],
            concentration: 3.0,
            seed,
        };
        let dataset = synthesize_ensemble(&spec).map_err(|e| e.to_string())?;
        let opts = EvalOptions {
            methods: methods.clone(),
            config: ConsensusConfig::default(),
            measure_time: false,
        };
        let records = evaluate(&dataset, &opts).map_err(|f| f.error.to_string())?;
        let summary = summarize(&records, &methods, serde_json::Value::Null);
        let posw = summary.score(Method::Posw).map_or(0.0, |s| s.accuracy);
        let local = summary.mean_local_accuracy.unwrap_or(1.0);
        if posw >= local {
            wins += 1;
        }
        let _ = writeln!(
            table,
            "  seed {seed}: posw {posw:.3}, mean local {local:.3}"
        );
        all_records.extend(records);
    }
    let pooled = summarize(&all_records, &methods, serde_json::Value::Null);
    let _ = writeln!(table, "  pooled over {} samples:", pooled.n_samples);
    for line in pooled.accuracy_table().lines() {
        let _ = writeln!(table, "    {line}");
    }
    let elapsed = start.elapsed();
    ensure(wins >= 9, || {
        format!("PoSw beat the mean peer on only {wins}/10 seeds")
    })?;
    ensure(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:.1?}")
    })?;
    Ok(format!(
        "PoSw >= mean local accuracy on {wins}/10 seeds; {elapsed:.1?}"
    ))
}

fn baseline_contrast() -> Verdict {
    // first-round votes N N F F Q; F carries more total confidence
    let five = vec![
        belief(&[0.40, 0.05, 0.05, 0.30, 0.20]),
        belief(&[0.38, 0.07, 0.05, 0.30, 0.20]),
        belief(&[0.20, 0.05, 0.05, 0.45, 0.25]),
        belief(&[0.15, 0.05, 0.05, 0.50, 0.25]),
        belief(&[0.10, 0.05, 0.05, 0.35, 0.45]),
    ];
    // two against two
    let four = vec![
        belief(&[0.60, 0.40]),
        belief(&[0.70, 0.30]),
        belief(&[0.45, 0.55]),
        belief(&[0.20, 0.80]),
    ];
    for (name, beliefs, want) in [
        ("5-peer", five, ClassLabel(3)),
        ("4-peer", four, ClassLabel(1)),
    ] {
        let votes = first_round_votes(&beliefs);
        let n = beliefs.len();
        let majority = majority_vote(&votes).map_err(|e| e.to_string())?;
        let bft = bft_two_thirds(&votes, n).map_err(|e| e.to_string())?;
        let posw =
            run_consensus(&beliefs, &ConsensusConfig::default()).map_err(|e| e.to_string())?;
        ensure(matches!(majority, BaselineOutcome::Tie(_)), || {
            format!("{name}: majority gave {majority:?}")
        })?;
        ensure(bft == BaselineOutcome::NoConsensus, || {
            format!("{name}: bft gave {bft:?}")
        })?;
        ensure(posw.final_label == want, || {
            format!("{name}: PoSw gave {}", posw.final_label)
        })?;
    }
    Ok("majority ties, 2/3 quorum fails, PoSw decides on both fixtures".into())
}

fn timing_sanity() -> Verdict {
    let spec = SynthesisSpec {
        n_samples: 1000,
        n_peers: 5,
        n_classes: 5,
        accuracies: vec![0.87, 0.87, 0.86, 0.88, 0.84],
        concentration: 3.0,
        seed: 99,
    };
    let dataset = synthesize_ensemble(&spec).map_err(|e| e.to_string())?;
    let config = ConsensusConfig::default();
    let start = Instant::now();
    for sample in dataset.samples() {
        run_consensus(&sample.beliefs, &config).map_err(|e| e.to_string())?;
    }
    let mean = start.elapsed() / dataset.n_samples() as u32;
    ensure(mean < Duration::from_millis(10), || {
        format!("mean {mean:?} per sample")
    })?;
    Ok(format!("mean {mean:?} per sample at N=5, K=5"))
}

const INVARIANT_CASES: u32 = 10_000;

fn check<S: Strategy>(
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut config = Config::with_cases(INVARIANT_CASES);
    config.failure_persistence = None;
    config.max_global_rejects = INVARIANT_CASES;
    let mut runner = TestRunner::new(config);
    runner
        .run(&strategy, test)
        .map_err(|e| format!("{name}: {e}"))
}

fn invariant_suite() -> Verdict {
    let full = no_early_stop();

    check(
        "vote conservation",
        instance_strategy(any::<bool>()),
        |beliefs| {
            let r =
                run_consensus(&beliefs, &full).map_err(|e| TestCaseError::fail(e.to_string()))?;
            for rec in &r.trace {
                let counted: usize = tally(&rec.messages).unwrap_or_default().values().sum();
                prop_assert_eq!(counted, beliefs.len());
                prop_assert_eq!(rec.counts.values().sum::<usize>(), beliefs.len());
            }
            Ok(())
        },
    )?;

    check(
        "determinism",
        (instance_strategy(any::<bool>()), any::<u64>()),
        |(beliefs, seed)| {
            let config = ConsensusConfig {
                rng_seed: Some(seed),
                local_tie_policy: LocalTiePolicy::SeededRandom,
                ..Default::default()
            };
            prop_assert_eq!(
                run_consensus(&beliefs, &config).ok(),
                run_consensus(&beliefs, &config).ok()
            );
            Ok(())
        },
    )?;

    check(
        "peer permutation",
        instance_strategy(any::<bool>())
            .prop_flat_map(|b| (Just(b.clone()), Just(b).prop_shuffle())),
        |(beliefs, shuffled)| {
            let a =
                run_consensus(&beliefs, &full).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let b =
                run_consensus(&shuffled, &full).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(a.final_label, b.final_label);
            prop_assert_eq!(a.rounds, b.rounds);
            Ok(())
        },
    )?;

    check(
        "class permutation",
        instance_strategy(Just(false)).prop_flat_map(|b| {
            let k = b[0].n_classes();
            (Just(b), Just((0..k).collect::<Vec<_>>()).prop_shuffle())
        }),
        |(beliefs, perm)| {
            let a =
                run_consensus(&beliefs, &full).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assume!(!a.index_tie_break);
            let b = run_consensus(&permute_classes(&beliefs, &perm), &full)
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(b.final_label, ClassLabel(perm[a.final_label.0]));
            Ok(())
        },
    )?;

    check(
        "probability_sum linearity",
        (
            prop::collection::vec((0usize..6, 0.0f64..=1.0), 1..20),
            any::<prop::sample::Index>(),
            0usize..6,
        ),
        |(votes, split, label)| {
            let msgs: Vec<VoteMessage> = votes
                .iter()
                .enumerate()
                .map(|(peer_id, &(l, prob))| VoteMessage {
                    peer_id,
                    label: ClassLabel(l),
                    prob,
                })
                .collect();
            let (left, right) = msgs.split_at(split.index(msgs.len() + 1));
            let c = ClassLabel(label);
            let parts = probability_sum(c, left) + probability_sum(c, right);
            prop_assert!((probability_sum(c, &msgs) - parts).abs() <= 1e-12);
            Ok(())
        },
    )?;

    Ok(format!("5 properties x {INVARIANT_CASES} cases hold"))
}

fn main() -> ExitCode {
    // `cargo test -- <filter>` passes arguments through; this target always runs in full.
    let mut verdicts: Vec<(&str, Verdict)> = Vec::new();
    verdicts.push(("golden walkthroughs", golden_walkthroughs()));

    let start = Instant::now();
    let suite = random_suite();
    let elapsed = start.elapsed();
    verdicts.push(("convergence bound", convergence_bound(&suite, elapsed)));
    verdicts.push(("early-stop soundness", early_stop_soundness(&suite)));
    verdicts.push(("harness equivalence", harness_equivalence()));

    let mut table = String::new();
    verdicts.push(("ensemble benefit", ensemble_benefit(&mut table)));
    verdicts.push(("baseline contrast", baseline_contrast()));
    verdicts.push(("timing sanity", timing_sanity()));
    verdicts.push(("invariant suite", invariant_suite()));

    println!("\nacceptance");
    let mut failed = 0;
    for (i, (name, verdict)) in verdicts.iter().enumerate() {
        match verdict {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail}", i + 1);
            }
        }
    }
    println!("\ncomparison table (10 seeds x 1000 synthetic samples, N=5, K=5)");
    print!("{table}");
    println!("\n{} passed, {failed} failed", verdicts.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
