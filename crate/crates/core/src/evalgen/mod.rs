//! Generation metrics over a sampled set: validity, unique@k, novelty and
//! internal diversity.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::molgraph::{canonicalize, fingerprint, parse_smiles, tanimoto, CanonicalSmiles, Fingerprint};
use crate::model::{sample, Params, Scalar};
use crate::selfies::{decode, join_tokens, split_selfies};
use crate::tokenizer::Vocabulary;

pub const DEFAULT_SAMPLES: usize = 10_000;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("the generated set is empty")]
    EmptySet,
    #[error("the generated set has no valid molecules")]
    NoValid,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("IntDiv order must be 1 or 2, got {0}")]
    BadOrder(u32),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Samples in generation order with their decoded canonical forms; `None`
/// marks an empty generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedSet {
    pub selfies: Vec<String>,
    pub canonical: Vec<Option<CanonicalSmiles>>,
    pub seed: u64,
    pub checkpoint: String,
}

fn decode_canonical(selfies: &str) -> Result<Option<CanonicalSmiles>, String> {
    let tokens = split_selfies(selfies).map_err(|e| e.to_string())?;
    let graph = decode(&tokens);
    Ok((!graph.is_empty()).then(|| canonicalize(&graph)))
}

/// Seed for sample `index` of a run seeded with `seed`.
pub fn sample_seed(seed: u64, index: usize) -> u64 {
    crate::model::train::mix(seed, 0x5A4D_504C, index as u64)
}

/// Draws `n` samples; sample `i` uses its own seed derived from `(seed, i)`
/// so the set does not depend on how the work is split across threads.
pub fn generate_set<T: Scalar>(
    params: &Params<T>,
    vocab: &Vocabulary,
    n: usize,
    seed: u64,
    temperature: f64,
    checkpoint: &str,
) -> GeneratedSet {
    let max_len = params.config.max_len;
    let selfies: Vec<String> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, i));
            let ids = sample(params, &mut rng, max_len, temperature);
            let tokens = vocab.decode_ids(&ids).expect("sampled ids lie in the vocabulary");
            join_tokens(&tokens)
        })
        .collect();
    let canonical = selfies
        .par_iter()
        .map(|s| decode_canonical(s).expect("generated text is well formed"))
        .collect();
    GeneratedSet {
        selfies,
        canonical,
        seed,
        checkpoint: checkpoint.to_owned(),
    }
}

impl GeneratedSet {
    /// Rebuilds a set from SELFIES lines, one generation per line (blank
    /// lines are empty generations).
    pub fn from_selfies_lines<R: BufRead>(input: R, seed: u64, checkpoint: &str) -> Result<Self, MetricError> {
        let mut set = GeneratedSet {
            selfies: Vec::new(),
            canonical: Vec::new(),
            seed,
            checkpoint: checkpoint.to_owned(),
        };
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let text = line.trim();
            let canon = decode_canonical(text).map_err(|message| MetricError::Parse { line: i + 1, message })?;
            set.selfies.push(text.to_owned());
            set.canonical.push(canon);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.selfies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selfies.is_empty()
    }

    pub fn write_selfies<W: Write>(&self, mut out: W) -> io::Result<()> {
        for s in &self.selfies {
            writeln!(out, "{s}")?;
        }
        Ok(())
    }

    /// Canonical SMILES per line, blank for empty generations.
    pub fn write_smiles<W: Write>(&self, mut out: W) -> io::Result<()> {
        for c in &self.canonical {
            writeln!(out, "{}", c.as_ref().map_or("", |c| c.as_str()))?;
        }
        Ok(())
    }

    /// Valid molecules in generation order.
    pub fn valid(&self) -> impl Iterator<Item = &CanonicalSmiles> {
        self.canonical.iter().flatten()
    }

    /// Distinct valid molecules in order of first appearance.
    pub fn distinct_valid(&self) -> Vec<&CanonicalSmiles> {
        let mut seen = HashSet::new();
        self.valid().filter(|c| seen.insert(*c)).collect()
    }
}

/// Fraction of generations that decode to a non-empty molecule.
pub fn validity(set: &GeneratedSet) -> Result<f64, MetricError> {
    if set.is_empty() {
        return Err(MetricError::EmptySet);
    }
    Ok(set.valid().count() as f64 / set.len() as f64)
}

/// Distinct molecules among the first `min(k, valid)` valid generations,
/// over that window size. Returns the ratio, distinct count and window.
pub fn unique_at_counts(set: &GeneratedSet, k: usize) -> Result<(f64, usize, usize), MetricError> {
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    let window: Vec<&CanonicalSmiles> = set.valid().take(k).collect();
    if window.is_empty() {
        return Err(MetricError::NoValid);
    }
    let distinct = window.iter().collect::<HashSet<_>>().len();
    Ok((distinct as f64 / window.len() as f64, distinct, window.len()))
}

pub fn unique_at(set: &GeneratedSet, k: usize) -> Result<f64, MetricError> {
    unique_at_counts(set, k).map(|(r, _, _)| r)
}

/// Fraction of distinct valid molecules absent from `training`.
pub fn novelty(set: &GeneratedSet, training: &HashSet<CanonicalSmiles>) -> Result<f64, MetricError> {
    let distinct = set.distinct_valid();
    if distinct.is_empty() {
        return Err(MetricError::NoValid);
    }
    let novel = distinct.iter().filter(|c| !training.contains(**c)).count();
    Ok(novel as f64 / distinct.len() as f64)
}

/// `1 − ((1/|G|²) Σ_{a,b} T(a,b)^p)^{1/p}` over all ordered pairs,
/// self-pairs included. Rows are summed independently and then added in
/// row order, so the value does not depend on thread scheduling.
pub fn internal_diversity_of(fps: &[Fingerprint], p: u32) -> Result<f64, MetricError> {
    if p != 1 && p != 2 {
        return Err(MetricError::BadOrder(p));
    }
    if fps.is_empty() {
        return Err(MetricError::NoValid);
    }
    let rows: Vec<f64> = fps
        .par_iter()
        .map(|a| {
            fps.iter()
                .map(|b| tanimoto(a, b).expect("fingerprints share one width").powi(p as i32))
                .sum::<f64>()
        })
        .collect();
    let n = fps.len() as f64;
    let mean = rows.iter().sum::<f64>() / (n * n);
    Ok(1.0 - mean.powf(1.0 / p as f64))
}

/// Fingerprints of the distinct valid molecules.
pub fn set_fingerprints(set: &GeneratedSet, radius: u32, width: usize) -> Vec<Fingerprint> {
    set.distinct_valid()
        .par_iter()
        .map(|c| {
            let g = parse_smiles(c.as_str()).expect("canonical SMILES parse back");
            fingerprint(&g, radius, width)
        })
        .collect()
}

pub fn internal_diversity(set: &GeneratedSet, p: u32, radius: u32, width: usize) -> Result<f64, MetricError> {
    internal_diversity_of(&set_fingerprints(set, radius, width), p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportCounts {
    pub generated: usize,
    pub valid: usize,
    pub empty: usize,
    pub window: usize,
    pub unique_in_window: usize,
    pub distinct_valid: usize,
    pub novel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FingerprintSettings {
    pub radius: u32,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub checkpoint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationReport {
    pub validity: f64,
    pub unique_at_k: f64,
    pub k: usize,
    pub novelty: f64,
    pub intdiv1: f64,
    pub intdiv2: f64,
    pub counts: ReportCounts,
    pub fingerprint: FingerprintSettings,
    pub provenance: Provenance,
}

pub fn report(
    set: &GeneratedSet,
    k: usize,
    training: &HashSet<CanonicalSmiles>,
    radius: u32,
    width: usize,
) -> Result<GenerationReport, MetricError> {
    let validity = validity(set)?;
    let (unique_at_k, unique_in_window, window) = unique_at_counts(set, k)?;
    let distinct = set.distinct_valid();
    let novel = distinct.iter().filter(|c| !training.contains(**c)).count();
    let fps = set_fingerprints(set, radius, width);
    let valid = set.valid().count();
    Ok(GenerationReport {
        validity,
        unique_at_k,
        k,
        novelty: novelty(set, training)?,
        intdiv1: internal_diversity_of(&fps, 1)?,
        intdiv2: internal_diversity_of(&fps, 2)?,
        counts: ReportCounts {
            generated: set.len(),
            valid,
            empty: set.len() - valid,
            window,
            unique_in_window,
            distinct_valid: distinct.len(),
            novel,
        },
        fingerprint: FingerprintSettings { radius, width },
        provenance: Provenance {
            seed: set.seed,
            checkpoint: set.checkpoint.clone(),
        },
    })
}

impl GenerationReport {
    /// Aligned two-column text rendering.
    pub fn table(&self) -> String {
        let c = &self.counts;
        let rows = [
            ("validity", format!("{:.4}", self.validity), format!("{}/{}", c.valid, c.generated)),
            (
                "unique@k",
                format!("{:.4}", self.unique_at_k),
                format!("{}/{} (k={})", c.unique_in_window, c.window, self.k),
            ),
            ("novelty", format!("{:.4}", self.novelty), format!("{}/{}", c.novel, c.distinct_valid)),
            ("IntDiv1", format!("{:.4}", self.intdiv1), String::new()),
            ("IntDiv2", format!("{:.4}", self.intdiv2), String::new()),
        ];
        let mut out = String::new();
        writeln!(out, "{:<10} {:>8}  counts", "metric", "value").unwrap();
        for (name, value, counts) in rows {
            writeln!(out, "{name:<10} {value:>8}  {counts}").unwrap();
        }
        out
    }
}
