//! Prediction-matrix datasets: per-sample, per-peer belief vectors with
//! optional ground truth.
//!
//! Two on-disk layouts are supported.
//!
//! Tabular (`csv`), one row per `(sample, peer)`:
//!
//! ```text
//! sample_id,peer_id,true_label,p_0,...,p_{K-1}
//! ```
//!
//! `true_label` may be empty. Rows of a sample need not be contiguous but
//! each sample must list peers `0..N` exactly once.
//!
//! Structured (`json`):
//!
//! ```text
//! {"n_peers": N, "n_classes": K, "class_names": [..] | null,
//!  "samples": [{"id": "..", "truth": k | null, "beliefs": [[..K], ..N]}]}
//! ```

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{validate_simplex, BeliefVector, ClassLabel};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("{location}: {reason}")]
    Row { location: String, reason: String },
    #[error("dataset is not rectangular: {0}")]
    Shape(String),
    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown format `{0}` (expected csv or json)")]
    UnknownFormat(String),
    #[error("invalid synthesis spec: {0}")]
    Spec(String),
}

impl DatasetError {
    pub fn is_io(&self) -> bool {
        matches!(self, DatasetError::Io { .. })
    }

    fn row(location: impl Into<String>, reason: impl Into<String>) -> Self {
        DatasetError::Row {
            location: location.into(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Guesses from the file extension; anything but `.json` is tabular.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

impl FromStr for Format {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(DatasetError::UnknownFormat(other.into())),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Rescale rows whose mass is off the simplex instead of rejecting them.
    pub renormalize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub truth: Option<ClassLabel>,
    /// One belief per peer, indexed by peer id.
    pub beliefs: Vec<BeliefVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDataset {
    n_peers: usize,
    n_classes: usize,
    class_names: Option<Vec<String>>,
    samples: Vec<Sample>,
}

impl PredictionDataset {
    /// Checks shape, label ranges and class names.
    pub fn new(
        n_peers: usize,
        n_classes: usize,
        class_names: Option<Vec<String>>,
        samples: Vec<Sample>,
    ) -> Result<Self, DatasetError> {
        if n_peers == 0 {
            return Err(DatasetError::Shape("n_peers must be positive".into()));
        }
        if n_classes < 2 {
            return Err(DatasetError::Shape(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        if let Some(names) = &class_names {
            if names.len() != n_classes {
                return Err(DatasetError::Shape(format!(
                    "{} class names for {n_classes} classes",
                    names.len()
                )));
            }
        }
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(DatasetError::Shape(format!("duplicate sample id {}", s.id)));
            }
            if s.beliefs.len() != n_peers {
                return Err(DatasetError::Shape(format!(
                    "sample {} has {} peers, expected {n_peers}",
                    s.id,
                    s.beliefs.len()
                )));
            }
            if let Some((peer, b)) = s
                .beliefs
                .iter()
                .enumerate()
                .find(|(_, b)| b.n_classes() != n_classes)
            {
                return Err(DatasetError::Shape(format!(
                    "sample {} peer {peer} has {} classes, expected {n_classes}",
                    s.id,
                    b.n_classes()
                )));
            }
            if let Some(t) = s.truth {
                if t.0 >= n_classes {
                    return Err(DatasetError::Shape(format!(
                        "sample {} truth {t} out of range",
                        s.id
                    )));
                }
            }
        }
        Ok(Self {
            n_peers,
            n_classes,
            class_names,
            samples,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn n_peers(&self) -> usize {
        self.n_peers
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn has_truth(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.truth.is_some())
    }

    /// Resolves a class given either by name or by index.
    pub fn parse_label(&self, text: &str) -> Option<ClassLabel> {
        if let Some(names) = &self.class_names {
            if let Some(i) = names.iter().position(|n| n == text) {
                return Some(ClassLabel(i));
            }
        }
        text.parse::<usize>()
            .ok()
            .filter(|&i| i < self.n_classes)
            .map(ClassLabel)
    }

    pub fn label_name(&self, label: ClassLabel) -> String {
        match &self.class_names {
            Some(names) => names[label.0].clone(),
            None => label.to_string(),
        }
    }
}

pub fn load_dataset(
    path: &Path,
    format: Format,
    options: LoadOptions,
) -> Result<PredictionDataset, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    match format {
        Format::Csv => parse_csv(&text, options),
        Format::Json => parse_json(&text, options),
    }
}

fn make_belief(
    probs: Vec<f64>,
    options: LoadOptions,
    location: &str,
) -> Result<BeliefVector, DatasetError> {
    if let Some((i, p)) = probs
        .iter()
        .enumerate()
        .find(|(_, p)| !p.is_finite() || !(0.0..=1.0).contains(*p))
    {
        return Err(DatasetError::row(
            format!("{location}, column p_{i}"),
            format!("probability {p} outside [0, 1]"),
        ));
    }
    let built = if options.renormalize {
        BeliefVector::renormalized(probs)
    } else {
        validate_simplex(&probs).map_err(|e| DatasetError::row(location, e))?;
        BeliefVector::new(probs)
    };
    built.map_err(|e| DatasetError::row(location, e.to_string()))
}

pub fn parse_csv(text: &str, options: LoadOptions) -> Result<PredictionDataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| DatasetError::Header(e.to_string()))?
        .clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 5 || cols[..3] != ["sample_id", "peer_id", "true_label"] {
        return Err(DatasetError::Header(format!(
            "expected `sample_id,peer_id,true_label,p_0,...`, got `{}`",
            cols.join(",")
        )));
    }
    let n_classes = cols.len() - 3;
    for (i, c) in cols[3..].iter().enumerate() {
        if *c != format!("p_{i}") {
            return Err(DatasetError::Header(format!(
                "column {} should be `p_{i}`, got `{c}`",
                i + 4
            )));
        }
    }

    struct Pending {
        id: String,
        truth: Option<ClassLabel>,
        beliefs: Vec<Option<BeliefVector>>,
    }
    let mut order: Vec<Pending> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();

    for (i, record) in reader.records().enumerate() {
        // Header is line 1.
        let line = i + 2;
        let loc = format!("row {line}");
        let record = record.map_err(|e| DatasetError::row(&loc, e.to_string()))?;
        if record.len() != cols.len() {
            return Err(DatasetError::row(
                &loc,
                format!("{} fields, expected {}", record.len(), cols.len()),
            ));
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(DatasetError::row(
                format!("{loc}, column sample_id"),
                "empty sample id",
            ));
        }
        let peer: usize = record[1].parse().map_err(|_| {
            DatasetError::row(
                format!("{loc}, column peer_id"),
                format!("bad peer id `{}`", &record[1]),
            )
        })?;
        let truth = match &record[2] {
            "" => None,
            t => Some(ClassLabel(t.parse().map_err(|_| {
                DatasetError::row(
                    format!("{loc}, column true_label"),
                    format!("bad label `{t}`"),
                )
            })?)),
        };
        if let Some(t) = truth {
            if t.0 >= n_classes {
                return Err(DatasetError::row(
                    format!("{loc}, column true_label"),
                    format!("label {t} out of range for {n_classes} classes"),
                ));
            }
        }
        let probs = record
            .iter()
            .skip(3)
            .enumerate()
            .map(|(c, v)| {
                v.parse::<f64>().map_err(|_| {
                    DatasetError::row(
                        format!("{loc}, column p_{c}"),
                        format!("not a number: `{v}`"),
                    )
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let belief = make_belief(probs, options, &loc)?;

        let slot = *index.entry(id.clone()).or_insert_with(|| {
            order.push(Pending {
                id,
                truth,
                beliefs: Vec::new(),
            });
            order.len() - 1
        });
        let pending = &mut order[slot];
        if pending.truth != truth {
            return Err(DatasetError::row(
                format!("{loc}, column true_label"),
                format!("conflicting truth for sample {}", pending.id),
            ));
        }
        if pending.beliefs.len() <= peer {
            pending.beliefs.resize(peer + 1, None);
        }
        if pending.beliefs[peer].is_some() {
            return Err(DatasetError::row(
                &loc,
                format!("peer {peer} listed twice for sample {}", pending.id),
            ));
        }
        pending.beliefs[peer] = Some(belief);
    }

    let n_peers = order.iter().map(|p| p.beliefs.len()).max().unwrap_or(0);
    let samples = order
        .into_iter()
        .map(|p| {
            if p.beliefs.len() != n_peers || p.beliefs.iter().any(Option::is_none) {
                return Err(DatasetError::Shape(format!(
                    "sample {} does not list all {n_peers} peers",
                    p.id
                )));
            }
            Ok(Sample {
                id: p.id,
                truth: p.truth,
                beliefs: p.beliefs.into_iter().flatten().collect(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if samples.is_empty() {
        return Err(DatasetError::Shape("no samples".into()));
    }
    PredictionDataset::new(n_peers, n_classes, None, samples)
}

#[derive(Serialize, Deserialize)]
struct JsonDataset {
    n_peers: usize,
    n_classes: usize,
    #[serde(default)]
    class_names: Option<Vec<String>>,
    samples: Vec<JsonSample>,
}

#[derive(Serialize, Deserialize)]
struct JsonSample {
    id: SampleId,
    #[serde(default)]
    truth: Option<usize>,
    beliefs: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SampleId {
    Num(u64),
    Text(String),
}

pub fn parse_json(text: &str, options: LoadOptions) -> Result<PredictionDataset, DatasetError> {
    let raw: JsonDataset = serde_json::from_str(text)?;
    let mut samples = Vec::with_capacity(raw.samples.len());
    for (si, s) in raw.samples.into_iter().enumerate() {
        let id = match s.id {
            SampleId::Num(n) => n.to_string(),
            SampleId::Text(t) => t,
        };
        if s.beliefs.len() != raw.n_peers {
            return Err(DatasetError::Shape(format!(
                "sample {id} has {} peers, expected {}",
                s.beliefs.len(),
                raw.n_peers
            )));
        }
        let beliefs = s
            .beliefs
            .into_iter()
            .enumerate()
            .map(|(peer, probs)| {
                let loc = format!("samples[{si}] (id {id}), peer {peer}");
                if probs.len() != raw.n_classes {
                    return Err(DatasetError::row(
                        loc,
                        format!("{} probabilities, expected {}", probs.len(), raw.n_classes),
                    ));
                }
                make_belief(probs, options, &loc)
            })
            .collect::<Result<Vec<_>, _>>()?;
        samples.push(Sample {
            id,
            truth: s.truth.map(ClassLabel),
            beliefs,
        });
    }
    PredictionDataset::new(raw.n_peers, raw.n_classes, raw.class_names, samples)
}

/// Serializes a dataset; probabilities are written in shortest round-trip
/// form so `load(save(d)) == d` bit for bit.
pub fn save_dataset(
    dataset: &PredictionDataset,
    path: &Path,
    format: Format,
) -> Result<(), DatasetError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    match format {
        Format::Csv => write_csv(dataset, &mut out).map_err(io_err(path))?,
        Format::Json => {
            let raw = JsonDataset {
                n_peers: dataset.n_peers,
                n_classes: dataset.n_classes,
                class_names: dataset.class_names.clone(),
                samples: dataset
                    .samples
                    .iter()
                    .map(|s| JsonSample {
                        id: SampleId::Text(s.id.clone()),
                        truth: s.truth.map(|t| t.0),
                        beliefs: s.beliefs.iter().map(|b| b.probs().to_vec()).collect(),
                    })
                    .collect(),
            };
            serde_json::to_writer_pretty(&mut out, &raw)?;
            out.write_all(b"\n").map_err(io_err(path))?;
        }
    }
    out.flush().map_err(io_err(path))
}

fn write_csv<W: Write>(dataset: &PredictionDataset, out: &mut W) -> std::io::Result<()> {
    write!(out, "sample_id,peer_id,true_label")?;
    for k in 0..dataset.n_classes {
        write!(out, ",p_{k}")?;
    }
    writeln!(out)?;
    for s in &dataset.samples {
        let truth = s.truth.map(|t| t.to_string()).unwrap_or_default();
        for (peer, b) in s.beliefs.iter().enumerate() {
            write!(out, "{},{peer},{truth}", csv_field(&s.id))?;
            for p in b.probs() {
                write!(out, ",{p}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
