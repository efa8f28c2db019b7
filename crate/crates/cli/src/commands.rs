use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use posw_core::dataset::{
    load_dataset, save_dataset, DatasetError, Format, LoadOptions, PredictionDataset,
};
use posw_core::experiment::{
    evaluate, sample_seed, save_results, summarize, EvalOptions, ExperimentSummary, Method,
    ResultSet, SampleFailure,
};
use posw_core::harness::{export_trace, spawn_network, Behavior, HarnessError};
use posw_core::synth::{synthesize_ensemble, SynthesisSpec};
use posw_core::{run_consensus, ConsensusConfig, PoswError};
use serde_json::json;
use thiserror::Error;

use crate::{CompareArgs, GenArgs, InputArgs, RunArgs, SimulateArgs};

/// Accuracy targets used when `gen` gets no `--accuracy`.
const DEFAULT_ACCURACIES: [f64; 5] = [0.87, 0.87, 0.86, 0.88, 0.84];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("sample {sample}: round cap {cap} exceeded")]
    CapExceeded {
        sample: String,
        cap: usize,
        trace: String,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 3,
            CliError::Io(_) => 4,
            CliError::CapExceeded { .. } => 5,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

fn protocol_error(sample: &str, e: PoswError) -> CliError {
    match e {
        PoswError::RoundCapExceeded { cap, trace } => CliError::CapExceeded {
            sample: sample.to_string(),
            cap,
            trace: export_trace(&trace),
        },
        other => CliError::Validation(format!("sample {sample}: {other}")),
    }
}

impl From<SampleFailure> for CliError {
    fn from(f: SampleFailure) -> Self {
        protocol_error(&f.sample_id, f.error)
    }
}

fn load(input: &InputArgs) -> Result<PredictionDataset, CliError> {
    let format = input
        .input_format
        .map(Format::from)
        .unwrap_or_else(|| Format::from_path(&input.input));
    let options = LoadOptions {
        renormalize: input.renormalize,
    };
    Ok(load_dataset(&input.input, format, options)?)
}

fn checked_config(config: ConsensusConfig) -> Result<ConsensusConfig, CliError> {
    config
        .validate()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(config)
}

fn print_summary(summary: &ExperimentSummary) {
    println!("samples: {}", summary.n_samples);
    if !summary.rounds_histogram.is_empty() {
        println!("rounds histogram:");
        for (rounds, freq) in &summary.rounds_histogram {
            println!("  {rounds:>3}: {freq}");
        }
        println!("early stops: {}", summary.early_stops);
    }
    if let Some(t) = &summary.timing {
        println!(
            "time per sample (s): mean {:.3e}, median {:.3e}, max {:.3e}",
            t.mean_seconds, t.median_seconds, t.max_seconds
        );
    }
    if !summary.accuracy.is_empty() {
        print!("{}", summary.accuracy_table());
    }
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let dataset = load(&args.input)?;
    let config = checked_config(args.consensus.config())?;
    let methods = vec![Method::Posw];
    let opts = EvalOptions {
        methods: methods.clone(),
        config: config.clone(),
        measure_time: !args.no_timing,
    };
    let records = evaluate(&dataset, &opts)?;
    let echo = json!({
        "command": "run",
        "input": args.input.input.display().to_string(),
        "consensus": config,
    });
    let summary = summarize(&records, &methods, echo);
    print_summary(&summary);
    let results = ResultSet {
        methods,
        records,
        summary: Some(summary),
    };
    save_results(&results, &args.output, args.format.into())?;
    Ok(())
}

fn parse_methods(names: &[String], n_peers: usize) -> Result<Vec<Method>, CliError> {
    let mut methods = Vec::new();
    for name in names.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        if name == "local" {
            methods.extend((0..n_peers).map(Method::Local));
            continue;
        }
        let m: Method = name.parse().map_err(CliError::Validation)?;
        if let Method::Local(i) = m {
            if i >= n_peers {
                return Err(CliError::Validation(format!(
                    "{m}: dataset has {n_peers} peers"
                )));
            }
        }
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(CliError::Validation("no methods selected".into()));
    }
    Ok(methods)
}

pub fn compare(args: &CompareArgs) -> Result<(), CliError> {
    let dataset = load(&args.input)?;
    if !dataset.has_truth() {
        return Err(CliError::Validation(
            "compare needs a true label for every sample".into(),
        ));
    }
    let config = checked_config(args.consensus.config())?;
    let methods = parse_methods(&args.methods, dataset.n_peers())?;
    let opts = EvalOptions {
        methods: methods.clone(),
        config: config.clone(),
        measure_time: !args.no_timing,
    };
    let records = evaluate(&dataset, &opts)?;
    let echo = json!({
        "command": "compare",
        "input": args.input.input.display().to_string(),
        "methods": methods,
        "consensus": config,
    });
    let summary = summarize(&records, &methods, echo);
    print_summary(&summary);
    if let Some(path) = &args.output {
        let results = ResultSet {
            methods,
            records,
            summary: Some(summary),
        };
        save_results(&results, path, args.format.into())?;
    }
    Ok(())
}

pub fn gen(args: &GenArgs) -> Result<(), CliError> {
    let accuracies = match args.accuracy.as_slice() {
        [] => DEFAULT_ACCURACIES
            .iter()
            .copied()
            .cycle()
            .take(args.peers)
            .collect(),
        [one] => vec![*one; args.peers],
        many => many.to_vec(),
    };
    let spec = SynthesisSpec {
        n_samples: args.samples,
        n_peers: args.peers,
        n_classes: args.classes,
        accuracies,
        concentration: args.concentration,
        seed: args.seed,
    };
    let dataset = synthesize_ensemble(&spec)?;
    save_dataset(&dataset, &args.output, args.format.into())?;
    println!(
        "wrote {} samples x {} peers x {} classes to {}",
        dataset.n_samples(),
        dataset.n_peers(),
        dataset.n_classes(),
        args.output.display()
    );
    Ok(())
}

/// Parses `peer:label:prob`.
fn parse_liar(spec: &str, dataset: &PredictionDataset) -> Result<(usize, Behavior), CliError> {
    let bad = |why: &str| CliError::Validation(format!("invalid fault spec `{spec}`: {why}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [peer, label, prob] = parts.as_slice() else {
        return Err(bad("expected peer:label:prob"));
    };
    let peer: usize = peer.parse().map_err(|_| bad("peer is not an integer"))?;
    let label = dataset
        .parse_label(label)
        .ok_or_else(|| bad("unknown label"))?;
    let prob: f64 = prob.parse().map_err(|_| bad("prob is not a number"))?;
    Ok((peer, Behavior::FixedLiar { label, prob }))
}

fn behaviors(args: &SimulateArgs, dataset: &PredictionDataset) -> Result<Vec<Behavior>, CliError> {
    let n = dataset.n_peers();
    let mut behaviors = vec![Behavior::Honest; n];
    let mut assign = |peer: usize, b: Behavior| {
        if peer >= n {
            return Err(CliError::Validation(format!(
                "invalid fault spec: peer {peer} does not exist ({n} peers)"
            )));
        }
        behaviors[peer] = b;
        Ok(())
    };
    for &peer in &args.silent {
        assign(peer, Behavior::Silent)?;
    }
    for spec in &args.liar {
        let (peer, b) = parse_liar(spec, dataset)?;
        assign(peer, b)?;
    }
    Ok(behaviors)
}

struct SimRow {
    sample_id: String,
    final_label: String,
    rounds: usize,
    early_stopped: bool,
    reference_match: bool,
    fault_free_label: String,
    deviates: bool,
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let dataset = load(&args.input)?;
    let config = checked_config(args.consensus.config())?;
    let behaviors = behaviors(args, &dataset)?;

    let mut rows = Vec::with_capacity(dataset.n_samples());
    let mut traces = String::new();
    let mut fault_summary = String::from("none");
    for (i, sample) in dataset.samples().iter().enumerate() {
        let mut cfg = config.clone();
        cfg.rng_seed = config.rng_seed.map(|s| sample_seed(s, i));
        let harness_err = |e: HarnessError| match e {
            HarnessError::Protocol(p) => protocol_error(&sample.id, p),
            HarnessError::InvalidBehavior { .. } | HarnessError::NoHonestNode => {
                CliError::Validation(format!("invalid fault spec: {e}"))
            }
            other => CliError::Validation(format!("sample {}: {other}", sample.id)),
        };
        let mut net = spawn_network(&sample.beliefs, &cfg, &behaviors).map_err(harness_err)?;
        let report = net.run_to_convergence().map_err(harness_err)?;
        let fault_free =
            run_consensus(&sample.beliefs, &cfg).map_err(|e| protocol_error(&sample.id, e))?;
        fault_summary = report.fault_summary.clone();
        if args.trace.is_some() {
            let _ = writeln!(traces, "# sample {}", sample.id);
            traces.push_str(&export_trace(&report.result.trace));
        }
        rows.push(SimRow {
            sample_id: sample.id.clone(),
            final_label: dataset.label_name(report.result.final_label),
            rounds: report.result.rounds,
            early_stopped: report.result.early_stopped,
            reference_match: report.reference_match,
            fault_free_label: dataset.label_name(fault_free.final_label),
            deviates: report.result.final_label != fault_free.final_label,
        });
    }

    let deviations = rows.iter().filter(|r| r.deviates).count();
    let mismatches = rows.iter().filter(|r| !r.reference_match).count();
    println!("faults: {fault_summary}");
    println!(
        "samples: {}, reference mismatches: {mismatches}, label deviations: {deviations}",
        rows.len()
    );

    let text = match Format::from(args.format) {
        Format::Csv => {
            let mut out = String::from(
                "sample_id,final_label,rounds,early_stopped,reference_match,fault_free_label,deviates\n",
            );
            for r in &rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.sample_id,
                    r.final_label,
                    r.rounds,
                    r.early_stopped,
                    r.reference_match,
                    r.fault_free_label,
                    r.deviates
                );
            }
            let _ = writeln!(out, "# faults: {fault_summary}");
            out
        }
        Format::Json => {
            let samples: Vec<_> = rows
                .iter()
                .map(|r| {
                    json!({
                        "sample_id": r.sample_id,
                        "final_label": r.final_label,
                        "rounds": r.rounds,
                        "early_stopped": r.early_stopped,
                        "reference_match": r.reference_match,
                        "fault_free_label": r.fault_free_label,
                        "deviates": r.deviates,
                    })
                })
                .collect();
            let doc = json!({ "faults": fault_summary, "consensus": config, "samples": samples });
            serde_json::to_string_pretty(&doc).expect("json value serializes") + "\n"
        }
    };
    write_file(&args.output, &text)?;
    if let Some(path) = &args.trace {
        write_file(path, &traces)?;
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("io error on {}: {e}", path.display())))
}
