//! Runs PoSw and the baselines over a dataset and aggregates the metrics:
//! accuracy per method, a histogram of rounds and per-sample timing.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{bft_two_thirds, first_round_votes, majority_vote, soft_vote};
use crate::belief::ClassLabel;
use crate::consensus::{run_consensus, ConsensusConfig};
use crate::dataset::{csv_field, io_err, DatasetError, Format, PredictionDataset, Sample};
use crate::error::PoswError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Posw,
    Majority,
    Bft,
    Soft,
    /// A single peer's own argmax.
    Local(usize),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Posw => write!(f, "posw"),
            Method::Majority => write!(f, "majority"),
            Method::Bft => write!(f, "bft"),
            Method::Soft => write!(f, "soft"),
            Method::Local(i) => write!(f, "local_{i}"),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "posw" => Ok(Method::Posw),
            "majority" => Ok(Method::Majority),
            "bft" => Ok(Method::Bft),
            "soft" => Ok(Method::Soft),
            _ => s
                .strip_prefix("local_")
                .and_then(|i| i.parse().ok())
                .map(Method::Local)
                .ok_or_else(|| format!("unknown method `{s}`")),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Every method, with one local column per peer.
pub fn all_methods(n_peers: usize) -> Vec<Method> {
    let mut methods = vec![Method::Posw, Method::Majority, Method::Bft, Method::Soft];
    methods.extend((0..n_peers).map(Method::Local));
    methods
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub truth: Option<ClassLabel>,
    /// PoSw columns, present when PoSw ran.
    pub rounds: Option<usize>,
    pub early_stopped: Option<bool>,
    pub elapsed_seconds: Option<f64>,
    /// Aligned with the method list; `None` for a tie or no-consensus.
    pub decisions: Vec<Option<ClassLabel>>,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub methods: Vec<Method>,
    pub config: ConsensusConfig,
    pub measure_time: bool,
}

#[derive(Debug)]
pub struct SampleFailure {
    pub index: usize,
    pub sample_id: String,
    pub error: PoswError,
}

impl fmt::Display for SampleFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sample {}: {}", self.sample_id, self.error)
    }
}

/// Seed for the sample at `index`, fixed by position alone.
pub fn sample_seed(base: u64, index: usize) -> u64 {
    base ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn evaluate_sample(
    index: usize,
    sample: &Sample,
    opts: &EvalOptions,
) -> Result<SampleRecord, PoswError> {
    let mut record = SampleRecord {
        sample_id: sample.id.clone(),
        truth: sample.truth,
        rounds: None,
        early_stopped: None,
        elapsed_seconds: None,
        decisions: Vec::with_capacity(opts.methods.len()),
    };
    let first_votes = first_round_votes(&sample.beliefs);
    for method in &opts.methods {
        let decision = match *method {
            Method::Posw => {
                let mut config = opts.config.clone();
                config.rng_seed = opts.config.rng_seed.map(|s| sample_seed(s, index));
                let start = Instant::now();
                let result = run_consensus(&sample.beliefs, &config)?;
                let elapsed = start.elapsed().as_secs_f64();
                record.rounds = Some(result.rounds);
                record.early_stopped = Some(result.early_stopped);
                record.elapsed_seconds = opts.measure_time.then_some(elapsed);
                Some(result.final_label)
            }
            Method::Majority => majority_vote(&first_votes)?.decision(),
            Method::Bft => bft_two_thirds(&first_votes, sample.beliefs.len())?.decision(),
            Method::Soft => Some(soft_vote(&sample.beliefs)?),
            Method::Local(i) => Some(
                sample
                    .beliefs
                    .get(i)
                    .ok_or(PoswError::InvalidConfig(format!("no peer {i}")))?
                    .argmax(),
            ),
        };
        record.decisions.push(decision);
    }
    Ok(record)
}

/// Evaluates every sample, in parallel. Output order follows the dataset;
/// on failure the lowest-index failing sample is reported.
pub fn evaluate(
    dataset: &PredictionDataset,
    opts: &EvalOptions,
) -> Result<Vec<SampleRecord>, SampleFailure> {
    let outcomes: Vec<Result<SampleRecord, PoswError>> = dataset
        .samples()
        .par_iter()
        .enumerate()
        .map(|(i, s)| evaluate_sample(i, s, opts))
        .collect();
    outcomes
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|error| SampleFailure {
                index,
                sample_id: dataset.samples()[index].id.clone(),
                error,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: Method,
    pub accuracy: f64,
    pub correct: usize,
    /// Ties and no-consensus outcomes; these count as errors in `accuracy`.
    pub undecided: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_seconds: f64,
    pub median_seconds: f64,
    pub max_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub n_samples: usize,
    /// Empty when the dataset carries no ground truth.
    pub accuracy: Vec<MethodScore>,
    pub mean_local_accuracy: Option<f64>,
    pub rounds_histogram: BTreeMap<usize, usize>,
    pub early_stops: usize,
    pub timing: Option<TimingStats>,
    pub config: serde_json::Value,
}

impl ExperimentSummary {
    pub fn score(&self, method: Method) -> Option<&MethodScore> {
        self.accuracy.iter().find(|s| s.method == method)
    }

    /// Plain-text table of the accuracy scores.
    pub fn accuracy_table(&self) -> String {
        let mut out = String::from("method       accuracy  correct  undecided\n");
        for s in &self.accuracy {
            out.push_str(&format!(
                "{:<12} {:>8.4} {:>8} {:>10}\n",
                s.method.to_string(),
                s.accuracy,
                s.correct,
                s.undecided
            ));
        }
        if let Some(mean) = self.mean_local_accuracy {
            out.push_str(&format!("{:<12} {:>8.4}\n", "mean_local", mean));
        }
        out
    }
}

pub fn summarize(
    records: &[SampleRecord],
    methods: &[Method],
    config: serde_json::Value,
) -> ExperimentSummary {
    let n = records.len();
    let with_truth = n > 0 && records.iter().all(|r| r.truth.is_some());
    let accuracy: Vec<MethodScore> = if with_truth {
        methods
            .iter()
            .enumerate()
            .map(|(col, &method)| {
                let correct = records
                    .iter()
                    .filter(|r| r.decisions[col].is_some() && r.decisions[col] == r.truth)
                    .count();
                let undecided = records
                    .iter()
                    .filter(|r| r.decisions[col].is_none())
                    .count();
                MethodScore {
                    method,
                    accuracy: correct as f64 / n as f64,
                    correct,
                    undecided,
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    let locals: Vec<f64> = accuracy
        .iter()
        .filter(|s| matches!(s.method, Method::Local(_)))
        .map(|s| s.accuracy)
        .collect();
    let mean_local_accuracy =
        (!locals.is_empty()).then(|| locals.iter().sum::<f64>() / locals.len() as f64);

    let mut rounds_histogram = BTreeMap::new();
    for r in records.iter().filter_map(|r| r.rounds) {
        *rounds_histogram.entry(r).or_insert(0) += 1;
    }
    let early_stops = records
        .iter()
        .filter(|r| r.early_stopped == Some(true))
        .count();

    let mut times: Vec<f64> = records.iter().filter_map(|r| r.elapsed_seconds).collect();
    let timing = (!times.is_empty()).then(|| {
        times.sort_by(f64::total_cmp);
        let m = times.len();
        let median = if m % 2 == 1 {
            times[m / 2]
        } else {
            (times[m / 2 - 1] + times[m / 2]) / 2.0
        };
        TimingStats {
            mean_seconds: times.iter().sum::<f64>() / m as f64,
            median_seconds: median,
            max_seconds: times[m - 1],
        }
    });

    ExperimentSummary {
        n_samples: n,
        accuracy,
        mean_local_accuracy,
        rounds_histogram,
        early_stops,
        timing,
        config,
    }
}

/// Per-sample records plus an optional summary, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub methods: Vec<Method>,
    pub records: Vec<SampleRecord>,
    pub summary: Option<ExperimentSummary>,
}

const SUMMARY_PREFIX: &str = "# summary: ";
const FIXED_COLUMNS: [&str; 5] = ["sample_id", "truth", "rounds", "early_stopped", "elapsed_s"];

/// Writes the result set. The tabular layout is a header, one row per
/// sample and, when present, the summary as a single trailing
/// `# summary: {json}` line.
pub fn save_results(results: &ResultSet, path: &Path, format: Format) -> Result<(), DatasetError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, results)?;
            out.write_all(b"\n").map_err(io_err(path))?;
        }
        Format::Csv => {
            let text = results_to_csv(results)?;
            out.write_all(text.as_bytes()).map_err(io_err(path))?;
        }
    }
    out.flush().map_err(io_err(path))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn results_to_csv(results: &ResultSet) -> Result<String, DatasetError> {
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(results.methods.iter().map(ToString::to_string));
    let mut out = header.join(",");
    out.push('\n');
    for r in &results.records {
        let mut row = vec![
            csv_field(&r.sample_id),
            opt(r.truth),
            opt(r.rounds),
            opt(r.early_stopped),
            opt(r.elapsed_seconds),
        ];
        row.extend(r.decisions.iter().map(|d| opt(*d)));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    if let Some(summary) = &results.summary {
        out.push_str(SUMMARY_PREFIX);
        out.push_str(&serde_json::to_string(summary)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn load_results(path: &Path, format: Format) -> Result<ResultSet, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    match format {
        Format::Json => Ok(serde_json::from_str(&text)?),
        Format::Csv => results_from_csv(&text),
    }
}

pub fn results_from_csv(text: &str) -> Result<ResultSet, DatasetError> {
    let mut summary = None;
    let mut body = String::new();
    for line in text.lines() {
        if let Some(json) = line.strip_prefix(SUMMARY_PREFIX) {
            summary = Some(serde_json::from_str(json)?);
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut reader = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| DatasetError::Header(e.to_string()))?
        .clone();
    if header.len() < FIXED_COLUMNS.len() || header.iter().zip(FIXED_COLUMNS).any(|(a, b)| a != b) {
        return Err(DatasetError::Header(format!(
            "expected results header starting with `{}`",
            FIXED_COLUMNS.join(",")
        )));
    }
    let methods = header
        .iter()
        .skip(FIXED_COLUMNS.len())
        .map(|m| m.parse::<Method>().map_err(DatasetError::Header))
        .collect::<Result<Vec<_>, _>>()?;

    fn field<T: FromStr>(v: &str, line: usize, col: &str) -> Result<Option<T>, DatasetError> {
        if v.is_empty() {
            return Ok(None);
        }
        v.parse().map(Some).map_err(|_| DatasetError::Row {
            location: format!("row {line}, column {col}"),
            reason: format!("cannot parse `{v}`"),
        })
    }

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| DatasetError::Row {
            location: format!("row {line}"),
            reason: e.to_string(),
        })?;
        let decisions = rec
            .iter()
            .skip(FIXED_COLUMNS.len())
            .zip(&methods)
            .map(|(v, m)| field::<usize>(v, line, &m.to_string()).map(|o| o.map(ClassLabel)))
            .collect::<Result<Vec<_>, _>>()?;
        records.push(SampleRecord {
            sample_id: rec[0].to_string(),
            truth: field::<usize>(&rec[1], line, "truth")?.map(ClassLabel),
            rounds: field(&rec[2], line, "rounds")?,
            early_stopped: field(&rec[3], line, "early_stopped")?,
            elapsed_seconds: field(&rec[4], line, "elapsed_s")?,
            decisions,
        });
    }
    Ok(ResultSet {
        methods,
        records,
        summary,
    })
}
