use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{parse_pairs, RunConfig};
use super::CliError;
use crate::corpus::{first_field, load_smiles, smiles_to_selfies, Rejected};
use crate::evalgen::{self, GeneratedSet, MetricError};
use crate::evalprop::{self, Manifest, PropError, TaskResult};
use crate::model::{self, AdamSettings, Checkpoint, ModelConfig, ModelError, Params, Scalar, TrainSettings, Trainer};
use crate::molgraph::{canonicalize, parse_smiles, CanonicalSmiles};
use crate::selfies::{decode, join_tokens, split_selfies};
use crate::tokenizer::{VocabError, Vocabulary};

pub(super) const CONVERT_KEYS: &[(&str, &str)] = &[
    ("input", ""),
    ("output", ""),
    ("direction", "smiles-to-selfies"),
    ("lenient", "false"),
    ("rejects", ""),
    ("out_dir", ""),
    ("seed", "0"),
    ("threads", "0"),
];

pub(super) const TRAIN_KEYS: &[(&str, &str)] = &[
    ("corpus", ""),
    ("out_dir", ""),
    ("seed", "0"),
    ("threads", "0"),
    ("precision", "f32"),
    ("max_molecules", "0"),
    ("steps", "1000"),
    ("batch_size", "32"),
    ("chunk_size", "8"),
    ("learning_rate", "0.0003"),
    ("warmup_fraction", "0.05"),
    ("clip_norm", "1"),
    ("mask_rate", "0.15"),
    ("checkpoint_every", "0"),
    ("d_model", "128"),
    ("n_heads", "4"),
    ("encoder_layers", "2"),
    ("decoder_layers", "2"),
    ("ff_dim", "512"),
    ("max_len", "128"),
    ("dropout", "0.1"),
];

pub(super) const GENERATE_KEYS: &[(&str, &str)] = &[
    ("checkpoint", ""),
    ("vocab", ""),
    ("n", "10000"),
    ("temperature", "1"),
    ("out_dir", ""),
    ("seed", "0"),
    ("threads", "0"),
    ("precision", "f32"),
];

pub(super) const EVAL_GEN_KEYS: &[(&str, &str)] = &[
    ("generated", ""),
    ("training_canon", ""),
    ("k", "10000"),
    ("radius", "2"),
    ("width", "1024"),
    ("out_dir", ""),
    ("seed", ""),
    ("checkpoint_id", ""),
    ("threads", "0"),
];

pub(super) const EMBED_KEYS: &[(&str, &str)] = &[
    ("checkpoint", ""),
    ("vocab", ""),
    ("input", ""),
    ("output", ""),
    ("lenient", "false"),
    ("rejects", ""),
    ("out_dir", ""),
    ("seed", "0"),
    ("threads", "0"),
    ("precision", "f32"),
];

pub(super) const EVAL_PROP_KEYS: &[(&str, &str)] = &[
    ("checkpoint", ""),
    ("vocab", ""),
    ("dataset", ""),
    ("manifest", ""),
    ("out_dir", ""),
    ("seed", "0"),
    ("threads", "0"),
    ("precision", "f32"),
    ("ratios", "0.8,0.1,0.1"),
    ("lambdas", "0.001,0.01,0.1,1,10"),
];

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(io_at(path))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_at(path))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_at(path))
}

fn model_error(e: ModelError, path: &Path) -> CliError {
    match e {
        ModelError::Io(source) => CliError::Io {
            path: path.to_owned(),
            source,
        },
        ModelError::InvalidConfig(msg) => CliError::Config(msg),
        other => CliError::Domain(format!("{}: {other}", path.display())),
    }
}

fn vocab_error(e: VocabError, path: &Path) -> CliError {
    match e {
        VocabError::Io(source) => CliError::Io {
            path: path.to_owned(),
            source,
        },
        other => CliError::Domain(format!("{}: {other}", path.display())),
    }
}

/// First 16 hex digits of the SHA-256 of a file's bytes.
pub fn checkpoint_id(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(io_at(path))?;
    Ok(Sha256::digest(&bytes).iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// The output directory: `out_dir` if set, else the parent of `fallback`.
fn out_dir(config: &RunConfig, fallback: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = match (config.optional_path("out_dir"), fallback) {
        (Some(d), _) => d,
        (None, Some(f)) => f.parent().map(Path::to_path_buf).unwrap_or_default(),
        (None, None) => return Err(CliError::Config(format!("{} needs out_dir", config.command()))),
    };
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    fs::create_dir_all(&dir).map_err(io_at(&dir))?;
    Ok(dir)
}

fn echo_config(config: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let path = dir.join(format!("{}.config", config.command()));
    write_file(&path, config.to_text().as_bytes())
}

fn write_rejects(path: &Path, rejects: &[Rejected]) -> Result<(), CliError> {
    let mut out = create(path)?;
    for r in rejects {
        writeln!(out, "{}\t{}\t{}", r.line, r.text, r.reason).map_err(io_at(path))?;
    }
    out.flush().map_err(io_at(path))
}

fn finish_rejects(config: &RunConfig, rejects: &[Rejected], total: usize) -> Result<(), CliError> {
    if rejects.is_empty() {
        return Ok(());
    }
    log::warn!("{} of {total} lines rejected", rejects.len());
    if config.flag("lenient")? {
        Ok(())
    } else {
        Err(CliError::Domain(format!(
            "{} of {total} lines could not be converted (first: line {}: {})",
            rejects.len(),
            rejects[0].line,
            rejects[0].reason
        )))
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Precision {
    Single,
    Double,
}

fn precision(config: &RunConfig) -> Result<Precision, CliError> {
    match config.raw("precision") {
        "f32" => Ok(Precision::Single),
        "f64" => Ok(Precision::Double),
        other => Err(CliError::Config(format!("precision: expected f32 or f64, found {other:?}"))),
    }
}

/// Line-aligned conversion between SMILES and SELFIES.
pub fn cmd_convert(config: RunConfig) -> Result<(), CliError> {
    let input = config.path("input")?;
    let output = config.path("output")?;
    let to_selfies = match config.raw("direction") {
        "smiles-to-selfies" => true,
        "selfies-to-smiles" => false,
        other => return Err(CliError::Config(format!("direction: unknown value {other:?}"))),
    };
    config.flag("lenient")?;
    let dir = out_dir(&config, Some(&output))?;
    let rejects_path = config.optional_path("rejects").unwrap_or_else(|| sidecar(&output, ".rejects"));
    echo_config(&config, &dir)?;

    let reader = open(&input)?;
    let mut out = create(&output)?;
    let mut rejects = Vec::new();
    let mut total = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_at(&input))?;
        total += 1;
        let text = first_field(&line);
        let converted = if text.is_empty() {
            Err("empty line".to_owned())
        } else if to_selfies {
            smiles_to_selfies(text).map(|t| join_tokens(&t)).map_err(|e| e.to_string())
        } else {
            split_selfies(text)
                .map(|t| {
                    let graph = decode(&t);
                    if graph.is_empty() {
                        String::new()
                    } else {
                        canonicalize(&graph).0
                    }
                })
                .map_err(|e| e.to_string())
        };
        match converted {
            Ok(s) => writeln!(out, "{s}"),
            Err(reason) => {
                rejects.push(Rejected {
                    line: i + 1,
                    text: text.to_owned(),
                    reason,
                });
                writeln!(out)
            }
        }
        .map_err(io_at(&output))?;
    }
    out.flush().map_err(io_at(&output))?;
    write_rejects(&rejects_path, &rejects)?;
    finish_rejects(&config, &rejects, total)
}

fn model_config(config: &RunConfig, vocab_size: usize) -> Result<ModelConfig, CliError> {
    let c = ModelConfig {
        vocab_size,
        d_model: config.get("d_model")?,
        n_heads: config.get("n_heads")?,
        encoder_layers: config.get("encoder_layers")?,
        decoder_layers: config.get("decoder_layers")?,
        ff_dim: config.get("ff_dim")?,
        max_len: config.get("max_len")?,
        dropout: config.get("dropout")?,
    };
    c.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(c)
}

fn train_settings(config: &RunConfig) -> Result<TrainSettings, CliError> {
    let settings = TrainSettings {
        adam: AdamSettings {
            learning_rate: config.get("learning_rate")?,
            warmup_fraction: config.get("warmup_fraction")?,
            clip_norm: config.get("clip_norm")?,
            ..AdamSettings::default()
        },
        batch_size: config.get("batch_size")?,
        total_steps: config.get("steps")?,
        mask_rate: config.get("mask_rate")?,
        seed: config.get("seed")?,
        checkpoint_every: config.get("checkpoint_every")?,
        chunk_size: config.get("chunk_size")?,
    };
    let a = &settings.adam;
    if !(a.learning_rate > 0.0 && a.learning_rate.is_finite()) {
        return Err(CliError::Config("learning_rate must be positive".into()));
    }
    if !(0.0..=1.0).contains(&a.warmup_fraction) || a.clip_norm.is_nan() || a.clip_norm < 0.0 {
        return Err(CliError::Config("warmup_fraction must lie in [0, 1] and clip_norm be non-negative".into()));
    }
    if !(0.0..=1.0).contains(&settings.mask_rate) {
        return Err(CliError::Config("mask_rate must lie in [0, 1]".into()));
    }
    if settings.batch_size == 0 || settings.chunk_size == 0 {
        return Err(CliError::Config("batch_size and chunk_size must be positive".into()));
    }
    Ok(settings)
}

fn run_training<T: Scalar>(
    model: &ModelConfig,
    seqs: Vec<Vec<u32>>,
    settings: TrainSettings,
    dir: &Path,
) -> Result<(), CliError> {
    let params = model::init_model::<T>(model, settings.seed).map_err(|e| model_error(e, dir))?;
    let ckpt_dir = dir.join("checkpoints");
    if settings.checkpoint_every > 0 {
        fs::create_dir_all(&ckpt_dir).map_err(io_at(&ckpt_dir))?;
    }
    let mut trainer = Trainer::new(params, seqs, settings).map_err(|e| model_error(e, dir))?;
    trainer
        .run(Some(&ckpt_dir))
        .map_err(|e| model_error(e, &ckpt_dir))?;
    let final_path = dir.join("model.ckpt");
    trainer.checkpoint().save(&final_path).map_err(|e| model_error(e, &final_path))?;
    let log_path = dir.join("train_log.csv");
    let mut out = create(&log_path)?;
    trainer.log().write_csv(&mut out).map_err(io_at(&log_path))?;
    out.flush().map_err(io_at(&log_path))?;
    if let Some(last) = trainer.log().records.last() {
        log::info!("trained {} steps, final batch loss {:.4}", last.step, last.loss);
    }
    Ok(())
}

/// Builds the vocabulary from the corpus and trains a fresh model.
///
/// Writes `vocab.txt`, `model.ckpt` (with optimizer state),
/// `checkpoints/step_<n>.ckpt`, `train_log.csv`, `train_canon.smi` (sorted
/// canonical SMILES of the molecules trained on) and `corpus.rejects`.
pub fn cmd_train(config: RunConfig) -> Result<(), CliError> {
    let corpus_path = config.path("corpus")?;
    let dir = out_dir(&config, None)?;
    let settings = train_settings(&config)?;
    let precision = precision(&config)?;
    let limit: usize = config.get("max_molecules")?;
    model_config(&config, 5)?;
    echo_config(&config, &dir)?;

    let corpus = load_smiles(open(&corpus_path)?).map_err(io_at(&corpus_path))?;
    write_rejects(&dir.join("corpus.rejects"), &corpus.rejected)?;
    if !corpus.rejected.is_empty() {
        log::warn!("{} corpus lines rejected", corpus.rejected.len());
    }
    let n = if limit == 0 { corpus.molecules.len() } else { limit.min(corpus.molecules.len()) };
    let max_len: usize = config.get("max_len")?;
    let used: Vec<usize> = (0..n).filter(|&i| corpus.molecules[i].len() + 2 <= max_len).collect();
    if used.len() < n {
        log::warn!("skipped {} molecules longer than max_len {max_len}", n - used.len());
    }
    if used.is_empty() {
        return Err(CliError::Domain(format!("{}: no usable molecules", corpus_path.display())));
    }
    let vocab = Vocabulary::build(used.iter().map(|&i| corpus.molecules[i].as_slice()))
        .map_err(|e| vocab_error(e, &corpus_path))?;
    let model = model_config(&config, vocab.len())?;
    let seqs: Vec<Vec<u32>> = used.iter().map(|&i| vocab.encode_ids(&corpus.molecules[i])).collect();
    log::info!("{} molecules, vocabulary {}", seqs.len(), vocab.len());

    let vocab_path = dir.join("vocab.txt");
    let mut out = create(&vocab_path)?;
    vocab.write_to(&mut out).map_err(io_at(&vocab_path))?;
    out.flush().map_err(io_at(&vocab_path))?;

    let mut canon: Vec<&CanonicalSmiles> = used.iter().map(|&i| &corpus.canonical[i]).collect();
    canon.sort();
    canon.dedup();
    let canon_path = dir.join("train_canon.smi");
    let mut out = create(&canon_path)?;
    for c in canon {
        writeln!(out, "{c}").map_err(io_at(&canon_path))?;
    }
    out.flush().map_err(io_at(&canon_path))?;

    match precision {
        Precision::Single => run_training::<f32>(&model, seqs, settings, &dir),
        Precision::Double => run_training::<f64>(&model, seqs, settings, &dir),
    }
}

fn load_model<T: Scalar>(config: &RunConfig) -> Result<(Params<T>, Vocabulary, String), CliError> {
    let ckpt = config.path("checkpoint")?;
    let vocab_path = config.path("vocab")?;
    let params = Checkpoint::<T>::load(&ckpt).map_err(|e| model_error(e, &ckpt))?.params;
    let vocab = Vocabulary::read_from(open(&vocab_path)?).map_err(|e| vocab_error(e, &vocab_path))?;
    if vocab.len() != params.config.vocab_size {
        return Err(CliError::Domain(format!(
            "{} has {} tokens but the checkpoint expects {}",
            vocab_path.display(),
            vocab.len(),
            params.config.vocab_size
        )));
    }
    Ok((params, vocab, checkpoint_id(&ckpt)?))
}

fn write_generated<T: Scalar>(config: &mut RunConfig, dir: &Path) -> Result<(), CliError> {
    let (params, vocab, id) = load_model::<T>(config)?;
    let n: usize = config.get("n")?;
    let seed: u64 = config.get("seed")?;
    let temperature: f64 = config.get("temperature")?;
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(CliError::Config("temperature must be positive".into()));
    }
    config.record("checkpoint_id", id.clone());
    echo_config(config, dir)?;
    let set = evalgen::generate_set(&params, &vocab, n, seed, temperature, &id);
    let selfies_path = dir.join("generated.selfies");
    let mut out = create(&selfies_path)?;
    set.write_selfies(&mut out).map_err(io_at(&selfies_path))?;
    out.flush().map_err(io_at(&selfies_path))?;
    let smiles_path = dir.join("generated.smi");
    let mut out = create(&smiles_path)?;
    set.write_smiles(&mut out).map_err(io_at(&smiles_path))?;
    out.flush().map_err(io_at(&smiles_path))?;
    log::info!("{} samples, {} valid", set.len(), set.valid().count());
    Ok(())
}

/// Samples `n` molecules; writes `generated.selfies` and the line-aligned
/// canonical SMILES sidecar `generated.smi` (blank for empty samples).
pub fn cmd_generate(mut config: RunConfig) -> Result<(), CliError> {
    let dir = out_dir(&config, None)?;
    match precision(&config)? {
        Precision::Single => write_generated::<f32>(&mut config, &dir),
        Precision::Double => write_generated::<f64>(&mut config, &dir),
    }
}

fn metric_error(e: MetricError, path: &Path) -> CliError {
    match e {
        MetricError::Io(source) => CliError::Io {
            path: path.to_owned(),
            source,
        },
        MetricError::ZeroK | MetricError::BadOrder(_) => CliError::Config(e.to_string()),
        other => CliError::Domain(format!("{}: {other}", path.display())),
    }
}

/// Canonical forms of every parseable SMILES line of `path`.
fn read_training_index(path: &Path) -> Result<HashSet<CanonicalSmiles>, CliError> {
    let mut index = HashSet::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(io_at(path))?;
        let smiles = first_field(&line);
        if smiles.is_empty() {
            continue;
        }
        let graph = parse_smiles(smiles)
            .map_err(|e| CliError::Domain(format!("{} line {}: {e}", path.display(), i + 1)))?;
        index.insert(canonicalize(&graph));
    }
    Ok(index)
}

/// Scores a generated SELFIES file; writes `generation_report.json` and
/// prints the table. Seed and checkpoint id default to those recorded by
/// `generate` in the same directory.
pub fn cmd_eval_gen(mut config: RunConfig) -> Result<(), CliError> {
    let generated = config.path("generated")?;
    let training = config.path("training_canon")?;
    let k: usize = config.get("k")?;
    let radius: u32 = config.get("radius")?;
    let width: usize = config.get("width")?;
    if width < 64 || !width.is_power_of_two() {
        return Err(CliError::Config(format!("width must be a power of two of at least 64, got {width}")));
    }
    if k == 0 {
        return Err(CliError::Config("k must be at least 1".into()));
    }
    let dir = out_dir(&config, Some(&generated))?;
    let recorded = generated.parent().unwrap_or(Path::new(".")).join("generate.config");
    let previous = match fs::read_to_string(&recorded) {
        Ok(text) => parse_pairs(&text).unwrap_or_default(),
        Err(_) => Vec::new(),
    };
    for key in ["seed", "checkpoint_id"] {
        if config.raw(key).is_empty() {
            let value = previous.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone());
            config.set(key, value.unwrap_or_else(|| if key == "seed" { "0".into() } else { "unknown".into() }))?;
        }
    }
    let seed: u64 = config.get("seed")?;
    echo_config(&config, &dir)?;

    let set = GeneratedSet::from_selfies_lines(open(&generated)?, seed, config.raw("checkpoint_id"))
        .map_err(|e| metric_error(e, &generated))?;
    let index = read_training_index(&training)?;
    let report = evalgen::report(&set, k, &index, radius, width).map_err(|e| metric_error(e, &generated))?;
    let json_path = dir.join("generation_report.json");
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&json_path, format!("{json}\n").as_bytes())?;
    print!("{}", report.table());
    Ok(())
}

const EMBED_BLOCK: usize = 1024;

fn write_embeddings<T: Scalar>(config: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let (params, vocab, id) = load_model::<T>(config)?;
    let input = config.path("input")?;
    let output = config.path("output")?;
    let rejects_path = config.optional_path("rejects").unwrap_or_else(|| sidecar(&output, ".rejects"));
    let mut echoed = config.clone();
    echoed.record("checkpoint_id", id);
    echo_config(&echoed, dir)?;

    let d = params.config.d_model;
    let nan_row = vec!["nan"; d].join(",");
    let mut lines = open(&input)?.lines();
    let mut out = create(&output)?;
    let mut rejects = Vec::new();
    let mut total = 0;
    loop {
        let block: Vec<String> = lines
            .by_ref()
            .take(EMBED_BLOCK)
            .collect::<Result<_, _>>()
            .map_err(io_at(&input))?;
        if block.is_empty() {
            break;
        }
        let rows: Vec<Result<String, String>> = block
            .par_iter()
            .map(|line| {
                let smiles = first_field(line);
                if smiles.is_empty() {
                    return Err("empty line".to_owned());
                }
                let tokens = smiles_to_selfies(smiles).map_err(|e| e.to_string())?;
                let e = model::embed(&params, &vocab.encode_ids(&tokens)).map_err(|e| e.to_string())?;
                Ok(e.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
            })
            .collect();
        for (j, row) in rows.into_iter().enumerate() {
            match row {
                Ok(r) => writeln!(out, "{r}"),
                Err(reason) => {
                    rejects.push(Rejected {
                        line: total + j + 1,
                        text: first_field(&block[j]).to_owned(),
                        reason,
                    });
                    writeln!(out, "{nan_row}")
                }
            }
            .map_err(io_at(&output))?;
        }
        total += block.len();
    }
    out.flush().map_err(io_at(&output))?;
    write_rejects(&rejects_path, &rejects)?;
    finish_rejects(config, &rejects, total)
}

/// One comma-separated embedding row per input line; lines that cannot be
/// embedded get a row of `nan` and an entry in the rejects sidecar.
pub fn cmd_embed(config: RunConfig) -> Result<(), CliError> {
    let output = config.path("output")?;
    config.flag("lenient")?;
    let dir = out_dir(&config, Some(&output))?;
    match precision(&config)? {
        Precision::Single => write_embeddings::<f32>(&config, &dir),
        Precision::Double => write_embeddings::<f64>(&config, &dir),
    }
}

fn prop_error(e: PropError, path: &Path) -> CliError {
    match e {
        PropError::Io(source) => CliError::Io {
            path: path.to_owned(),
            source,
        },
        PropError::Manifest(_) | PropError::BadRatios => CliError::Config(format!("{}: {e}", path.display())),
        other => CliError::Domain(format!("{}: {other}", path.display())),
    }
}

fn list(config: &RunConfig, key: &str) -> Result<Vec<f64>, CliError> {
    config
        .raw(key)
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("{key}: cannot parse {s:?}")))
        })
        .collect()
}

#[derive(Serialize)]
struct PropertyReport {
    checkpoint_id: String,
    dropped_rows: usize,
    unembedded_rows: usize,
    result: TaskResult,
}

fn property_report<T: Scalar>(config: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let manifest_path = config.path("manifest")?;
    let dataset_path = config.path("dataset")?;
    let seed: u64 = config.get("seed")?;
    let ratios: [f64; 3] = list(config, "ratios")?
        .try_into()
        .map_err(|_| CliError::Config("ratios needs three values".into()))?;
    let lambdas = list(config, "lambdas")?;
    if lambdas.is_empty() || lambdas.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
        return Err(CliError::Config("lambdas must be non-negative".into()));
    }
    let (params, vocab, id) = load_model::<T>(config)?;
    let mut echoed = config.clone();
    echoed.record("checkpoint_id", id.clone());
    echo_config(&echoed, dir)?;

    let text = fs::read_to_string(&manifest_path).map_err(io_at(&manifest_path))?;
    let manifest = Manifest::parse(&text).map_err(|e| prop_error(e, &manifest_path))?;
    let (dataset, dropped) =
        evalprop::load_dataset(open(&dataset_path)?, &manifest).map_err(|e| prop_error(e, &dataset_path))?;
    let (features, kept) = evalprop::featurize(&dataset, &params, &vocab);
    let result = evalprop::evaluate_probe(&dataset, &features, &kept, ratios, seed, &lambdas)
        .map_err(|e| prop_error(e, &dataset_path))?;
    println!(
        "{} {}: test {:.4} (validation {:.4}, lambda {})",
        result.dataset, result.metric, result.test_score, result.valid_score, result.lambda
    );
    let report = PropertyReport {
        checkpoint_id: id,
        dropped_rows: dropped,
        unembedded_rows: dataset.records.len() - kept.len(),
        result,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&dir.join("property_report.json"), format!("{json}\n").as_bytes())
}

/// Featurize, split, probe and score one dataset; writes
/// `property_report.json`.
pub fn cmd_eval_prop(config: RunConfig) -> Result<(), CliError> {
    let dir = out_dir(&config, None)?;
    match precision(&config)? {
        Precision::Single => property_report::<f32>(&config, &dir),
        Precision::Double => property_report::<f64>(&config, &dir),
    }
}
