//! Property prediction from frozen embeddings: dataset loading, seeded
//! splits, a regularized linear probe, and ROC-AUC / RMSE scoring.

use std::collections::BTreeMap;
use std::io::Read;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::smiles_to_selfies;
use crate::molgraph::parse_smiles;
use crate::model::{embed, Params, Scalar};
use crate::tokenizer::Vocabulary;

pub const LAMBDA_GRID: [f64; 5] = [1e-3, 1e-2, 0.1, 1.0, 10.0];
pub const DEFAULT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];
pub const GRADIENT_TOLERANCE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 20_000;

#[derive(Debug, Error)]
pub enum PropError {
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("dataset has no column named {0:?}")]
    MissingColumn(String),
    #[error("dataset has no usable records")]
    Empty,
    #[error("row {row}: label {column:?} value {value:?} is not valid for a {task} task")]
    BadLabel {
        row: usize,
        column: String,
        value: String,
        task: &'static str,
    },
    #[error("split ratios must be positive and sum to 1")]
    BadRatios,
    #[error("split would leave the {0} fold empty")]
    EmptyFold(&'static str),
    #[error("label {0} has a single class in the training fold")]
    SingleClass(usize),
    #[error("scores need both classes")]
    OneClass,
    #[error("length mismatch: {0} predictions, {1} labels")]
    LengthMismatch(usize, usize),
    #[error("no values to score")]
    NoValues,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskType {
    Classification,
    Regression,
}

impl TaskType {
    fn name(self) -> &'static str {
        match self {
            TaskType::Classification => "classification",
            TaskType::Regression => "regression",
        }
    }
}

/// Key=value description of a dataset file: `name`, `task`
/// (`classification` or `regression`), comma-separated `labels`, and
/// optionally `smiles_column` (default `smiles`).
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub name: String,
    pub task: TaskType,
    pub labels: Vec<String>,
    pub smiles_column: String,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Manifest, PropError> {
        let mut fields = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PropError::Manifest(format!("malformed line {line:?}")))?;
            fields.insert(k.trim().to_owned(), v.trim().to_owned());
        }
        let take = |key: &str| fields.get(key).cloned().ok_or_else(|| PropError::Manifest(format!("missing {key}")));
        let task = match take("task")?.as_str() {
            "classification" => TaskType::Classification,
            "regression" => TaskType::Regression,
            other => return Err(PropError::Manifest(format!("unknown task {other:?}"))),
        };
        let labels: Vec<String> = take("labels")?
            .split(',')
            .map(|s| s.trim().to_owned())
            .filter(|s| !s.is_empty())
            .collect();
        if labels.is_empty() {
            return Err(PropError::Manifest("no label columns".into()));
        }
        Ok(Manifest {
            name: take("name")?,
            task,
            labels,
            smiles_column: fields.get("smiles_column").cloned().unwrap_or_else(|| "smiles".into()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub smiles: String,
    /// One entry per label column; `None` is a missing value.
    pub labels: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyDataset {
    pub name: String,
    pub task: TaskType,
    pub label_names: Vec<String>,
    pub records: Vec<Record>,
}

fn parse_label(text: &str, task: TaskType) -> Option<Option<f64>> {
    let t = text.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("nan") || t.eq_ignore_ascii_case("na") {
        return Some(None);
    }
    let v: f64 = t.parse().ok()?;
    match task {
        TaskType::Regression if v.is_finite() => Some(Some(v)),
        TaskType::Classification if v == 0.0 || v == 1.0 => Some(Some(v)),
        _ => None,
    }
}

/// Reads a CSV with a header row. Rows whose SMILES do not parse, or whose
/// labels are all missing, are dropped; the second value is the number of
/// dropped rows.
pub fn load_dataset<R: Read>(input: R, manifest: &Manifest) -> Result<(PropertyDataset, usize), PropError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| PropError::MissingColumn(name.to_owned()))
    };
    let smiles_col = col(&manifest.smiles_column)?;
    let label_cols = manifest.labels.iter().map(|l| col(l)).collect::<Result<Vec<_>, _>>()?;
    let mut records = Vec::new();
    let mut dropped = 0;
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let smiles = rec.get(smiles_col).unwrap_or("").trim().to_owned();
        let mut labels = Vec::with_capacity(label_cols.len());
        for (&c, name) in label_cols.iter().zip(&manifest.labels) {
            let raw = rec.get(c).unwrap_or("");
            labels.push(parse_label(raw, manifest.task).ok_or_else(|| PropError::BadLabel {
                row: row + 1,
                column: name.clone(),
                value: raw.to_owned(),
                task: manifest.task.name(),
            })?);
        }
        if parse_smiles(&smiles).is_err() || labels.iter().all(Option::is_none) {
            dropped += 1;
            continue;
        }
        records.push(Record { smiles, labels });
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} rows with unparseable SMILES or no labels", manifest.name);
    }
    if records.is_empty() {
        return Err(PropError::Empty);
    }
    Ok((
        PropertyDataset {
            name: manifest.name.clone(),
            task: manifest.task,
            label_names: manifest.labels.clone(),
            records,
        },
        dropped,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Fold {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub folds: Vec<Fold>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

impl SplitAssignment {
    pub fn indices(&self, fold: Fold) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }
}

/// Seeded shuffle, then contiguous train/valid/test blocks with sizes
/// rounded from the ratios (test takes the remainder).
pub fn split(n: usize, ratios: [f64; 3], seed: u64) -> Result<SplitAssignment, PropError> {
    if ratios.iter().any(|&r| r <= 0.0 || !r.is_finite()) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(PropError::BadRatios);
    }
    let train = (n as f64 * ratios[0]).round() as usize;
    let valid = (n as f64 * ratios[1]).round() as usize;
    let test = n.saturating_sub(train + valid);
    for (size, name) in [(train, "train"), (valid, "valid"), (test, "test")] {
        if size == 0 {
            return Err(PropError::EmptyFold(name));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Fold::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        folds[i] = if rank < train {
            Fold::Train
        } else if rank < train + valid {
            Fold::Valid
        } else {
            Fold::Test
        };
    }
    Ok(SplitAssignment { folds, seed, ratios })
}

/// Embedding rows for the records that encode; returns the rows and the
/// indices of the records they belong to.
pub fn featurize<T: Scalar>(dataset: &PropertyDataset, params: &Params<T>, vocab: &Vocabulary) -> (Vec<Vec<f64>>, Vec<usize>) {
    let rows: Vec<Option<Vec<f64>>> = dataset
        .records
        .par_iter()
        .map(|r| {
            let tokens = smiles_to_selfies(&r.smiles).ok()?;
            let e = embed(params, &vocab.encode_ids(&tokens)).ok()?;
            Some(e.iter().map(|v| v.to_f64().unwrap()).collect())
        })
        .collect();
    let mut features = Vec::new();
    let mut kept = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        match row {
            Some(r) => {
                features.push(r);
                kept.push(i);
            }
            None => log::warn!("{}: record {} could not be embedded", dataset.name, i + 1),
        }
    }
    (features, kept)
}

/// Per-feature mean and standard deviation; constant features get 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Standardizer {
        let d = rows.first().map_or(0, |r| r.len());
        let n = rows.len().max(1) as f64;
        let means: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let stds = (0..d)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n;
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { means, stds }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&x, (&m, &s))| (x - m) / s)
            .collect()
    }
}

/// Linear model over standardized features, one output per label.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub task: TaskType,
    pub lambda: f64,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub standardizer: Standardizer,
    pub iterations: Vec<usize>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest eigenvalue of `XᵀX / n` by power iteration, used as the
/// smoothness constant for the gradient step.
fn gram_spectral_norm(xs: &[Vec<f64>]) -> f64 {
    let d = xs.first().map_or(0, |r| r.len());
    if d == 0 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut w = vec![0.0; d];
        for x in xs {
            let s = dot(x, &v) / n;
            for (wj, &xj) in w.iter_mut().zip(x) {
                *wj += s * xj;
            }
        }
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        for (vj, wj) in v.iter_mut().zip(&w) {
            *vj = wj / norm;
        }
    }
    lambda
}

/// Minimizes `(1/n) Σ loss(w·x + b, y) + (λ/2)|w|²` by full-batch gradient
/// descent, where loss is squared error / 2 (regression) or logistic
/// (classification). Stops when the gradient norm falls below
/// [`GRADIENT_TOLERANCE`] or after `max_iter` steps.
fn fit_one(xs: &[Vec<f64>], ys: &[f64], task: TaskType, lambda: f64, max_iter: usize) -> (Vec<f64>, f64, usize) {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let curvature = match task {
        TaskType::Regression => 1.0,
        TaskType::Classification => 0.25,
    };
    // bias acts like an extra all-ones feature
    let smooth = curvature * (gram_spectral_norm(xs) + 1.0) + lambda;
    let step = 1.0 / smooth;
    let mut w = vec![0.0; d];
    let mut b = match task {
        TaskType::Regression => ys.iter().sum::<f64>() / n,
        TaskType::Classification => 0.0,
    };
    let mut gw = vec![0.0; d];
    for it in 0..max_iter {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let z = dot(&w, x) + b;
            let r = match task {
                TaskType::Regression => z - y,
                TaskType::Classification => sigmoid(z) - y,
            } / n;
            gb += r;
            for (g, &xj) in gw.iter_mut().zip(x) {
                *g += r * xj;
            }
        }
        for (g, &wj) in gw.iter_mut().zip(&w) {
            *g += lambda * wj;
        }
        let norm = (dot(&gw, &gw) + gb * gb).sqrt();
        if norm < GRADIENT_TOLERANCE {
            return (w, b, it);
        }
        for (wj, &g) in w.iter_mut().zip(&gw) {
            *wj -= step * g;
        }
        b -= step * gb;
    }
    (w, b, max_iter)
}

/// Fits one output per label on `features` (rows) with `labels` (one vector
/// per row, missing values skipped per label). Standardization statistics
/// come from `features` only.
pub fn train_probe(
    features: &[&[f64]],
    labels: &[&[Option<f64>]],
    task: TaskType,
    lambda: f64,
    max_iter: usize,
) -> Result<Probe, PropError> {
    if features.is_empty() {
        return Err(PropError::NoValues);
    }
    if features.len() != labels.len() {
        return Err(PropError::LengthMismatch(features.len(), labels.len()));
    }
    let standardizer = Standardizer::fit(features);
    let xs: Vec<Vec<f64>> = features.iter().map(|r| standardizer.apply(r)).collect();
    let outputs = labels[0].len();
    let mut probe = Probe {
        task,
        lambda,
        weights: Vec::with_capacity(outputs),
        bias: Vec::with_capacity(outputs),
        standardizer,
        iterations: Vec::with_capacity(outputs),
    };
    for k in 0..outputs {
        let (rows, ys): (Vec<Vec<f64>>, Vec<f64>) = xs
            .iter()
            .zip(labels)
            .filter_map(|(x, l)| l[k].map(|y| (x.clone(), y)))
            .unzip();
        if rows.is_empty() {
            return Err(PropError::NoValues);
        }
        if task == TaskType::Classification {
            let pos = ys.iter().filter(|&&y| y == 1.0).count();
            if pos == 0 || pos == ys.len() {
                return Err(PropError::SingleClass(k));
            }
        }
        let (w, b, it) = fit_one(&rows, &ys, task, lambda, max_iter);
        probe.weights.push(w);
        probe.bias.push(b);
        probe.iterations.push(it);
    }
    Ok(probe)
}

impl Probe {
    /// One score per label: the regression value or the positive-class
    /// probability.
    pub fn predict(&self, row: &[f64]) -> Vec<f64> {
        let x = self.standardizer.apply(row);
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, &b)| {
                let z = dot(w, &x) + b;
                match self.task {
                    TaskType::Regression => z,
                    TaskType::Classification => sigmoid(z),
                }
            })
            .collect()
    }
}

/// Mann–Whitney estimate of P(score of a positive > score of a negative),
/// ties counting one half, via average ranks.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, PropError> {
    if scores.len() != labels.len() {
        return Err(PropError::LengthMismatch(scores.len(), labels.len()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(PropError::OneClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, q) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

pub fn rmse(predictions: &[f64], labels: &[f64]) -> Result<f64, PropError> {
    if predictions.len() != labels.len() {
        return Err(PropError::LengthMismatch(predictions.len(), labels.len()));
    }
    if predictions.is_empty() {
        return Err(PropError::NoValues);
    }
    let sum: f64 = predictions.iter().zip(labels).map(|(p, y)| (p - y).powi(2)).sum();
    Ok((sum / predictions.len() as f64).sqrt())
}

/// RMSE over every label (regression) or the mean ROC-AUC over labels with
/// both classes present (classification); `None` if nothing is scorable.
pub fn score(task: TaskType, predictions: &[Vec<f64>], labels: &[&[Option<f64>]]) -> Option<f64> {
    let outputs = labels.first()?.len();
    match task {
        TaskType::Regression => {
            let (p, y): (Vec<f64>, Vec<f64>) = (0..outputs)
                .flat_map(|k| predictions.iter().zip(labels).filter_map(move |(p, l)| l[k].map(|y| (p[k], y))))
                .unzip();
            rmse(&p, &y).ok()
        }
        TaskType::Classification => {
            let aucs: Vec<f64> = (0..outputs)
                .filter_map(|k| {
                    let (s, y): (Vec<f64>, Vec<bool>) = predictions
                        .iter()
                        .zip(labels)
                        .filter_map(|(p, l)| l[k].map(|y| (p[k], y == 1.0)))
                        .unzip();
                    roc_auc(&s, &y).ok()
                })
                .collect();
            (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64)
        }
    }
}

fn better(task: TaskType, candidate: f64, best: f64) -> bool {
    match task {
        TaskType::Regression => candidate < best,
        TaskType::Classification => candidate > best,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskResult {
    pub dataset: String,
    pub task: TaskType,
    pub metric: &'static str,
    pub test_score: f64,
    pub valid_score: f64,
    pub lambda: f64,
    pub split_seed: u64,
    pub train_size: usize,
    pub valid_size: usize,
    pub test_size: usize,
}

/// Splits the featurized records, fits one probe per λ in `grid`, keeps the
/// best on the validation fold and scores it on the test fold.
pub fn evaluate_probe(
    dataset: &PropertyDataset,
    features: &[Vec<f64>],
    kept: &[usize],
    ratios: [f64; 3],
    seed: u64,
    grid: &[f64],
) -> Result<TaskResult, PropError> {
    let assignment = split(features.len(), ratios, seed)?;
    let labels: Vec<&[Option<f64>]> = kept.iter().map(|&i| dataset.records[i].labels.as_slice()).collect();
    let pick = |fold| {
        let idx = assignment.indices(fold);
        let x: Vec<&[f64]> = idx.iter().map(|&i| features[i].as_slice()).collect();
        let y: Vec<&[Option<f64>]> = idx.iter().map(|&i| labels[i]).collect();
        (x, y)
    };
    let (train_x, train_y) = pick(Fold::Train);
    let (valid_x, valid_y) = pick(Fold::Valid);
    let (test_x, test_y) = pick(Fold::Test);
    let task = dataset.task;
    let mut best: Option<(f64, Probe)> = None;
    for &lambda in grid {
        let probe = train_probe(&train_x, &train_y, task, lambda, MAX_ITERATIONS)?;
        let preds: Vec<Vec<f64>> = valid_x.iter().map(|x| probe.predict(x)).collect();
        let Some(s) = score(task, &preds, &valid_y) else { continue };
        if best.as_ref().is_none_or(|(b, _)| better(task, s, *b)) {
            best = Some((s, probe));
        }
    }
    let (valid_score, probe) = best.ok_or(PropError::NoValues)?;
    let preds: Vec<Vec<f64>> = test_x.iter().map(|x| probe.predict(x)).collect();
    let test_score = score(task, &preds, &test_y).ok_or(PropError::NoValues)?;
    Ok(TaskResult {
        dataset: dataset.name.clone(),
        task,
        metric: match task {
            TaskType::Regression => "rmse",
            TaskType::Classification => "roc_auc",
        },
        test_score,
        valid_score,
        lambda: probe.lambda,
        split_seed: seed,
        train_size: train_x.len(),
        valid_size: valid_x.len(),
        test_size: test_x.len(),
    })
}
