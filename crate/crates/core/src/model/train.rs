//! Mini-batch denoising training.
//!
//! Every random choice is a pure function of the seed and a global index:
//! the sample order of epoch `e` is a shuffle seeded by `(seed, e)`, the
//! corruption of the sample at global position `g` is seeded by `(seed, g)`,
//! and dropout in chunk `c` of step `s` by `(seed, s, c)`. Chunk gradients
//! are summed in chunk order, so results do not depend on the thread count
//! and a run resumed from a checkpoint continues exactly like an
//! uninterrupted one.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::checkpoint::Checkpoint;
use super::forward::{check_ids, evaluate, loss_and_gradients, BatchStats};
use super::optim::{AdamSettings, AdamState};
use super::params::{Gradients, Params};
use super::scalar::Scalar;
use super::ModelError;
use crate::tokenizer::{corrupt, CorruptedPair, DEFAULT_MASK_RATE};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub adam: AdamSettings,
    pub batch_size: usize,
    /// Planned number of optimizer steps; sets the warmup length.
    pub total_steps: usize,
    pub mask_rate: f64,
    pub seed: u64,
    /// Write a checkpoint every this many steps; 0 disables.
    pub checkpoint_every: usize,
    /// Sequences per independently differentiated chunk.
    pub chunk_size: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            adam: AdamSettings::default(),
            batch_size: 32,
            total_steps: 1000,
            mask_rate: DEFAULT_MASK_RATE,
            seed: 0,
            checkpoint_every: 0,
            chunk_size: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub masked_acc: f64,
    pub seconds: f64,
}

/// Per-step training history.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
    pub mean_masked_acc: f64,
}

pub const LOG_HEADER: &str = "step,loss,masked_acc,seconds";

impl TrainLog {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{LOG_HEADER}")?;
        for r in &self.records {
            writeln!(out, "{},{},{},{:.3}", r.step, r.loss, r.masked_acc, r.seconds)?;
        }
        Ok(())
    }

    /// Averages over consecutive runs of `steps_per_epoch` records.
    pub fn epochs(&self, steps_per_epoch: usize) -> Vec<EpochSummary> {
        self.records
            .chunks(steps_per_epoch.max(1))
            .enumerate()
            .map(|(epoch, rs)| {
                let n = rs.len() as f64;
                EpochSummary {
                    epoch,
                    steps: rs.len(),
                    mean_loss: rs.iter().map(|r| r.loss).sum::<f64>() / n,
                    mean_masked_acc: rs.iter().map(|r| r.masked_acc).sum::<f64>() / n,
                }
            })
            .collect()
    }
}

/// splitmix64 finalizer over a combined key.
pub(crate) fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_ORDER: u64 = 1;
const STREAM_MASK: u64 = 2;
const STREAM_DROPOUT: u64 = 3;

/// Owns the parameters and optimizer state for one training run.
pub struct Trainer<T> {
    params: Params<T>,
    adam: AdamState<T>,
    settings: TrainSettings,
    corpus: Vec<Vec<u32>>,
    log: TrainLog,
    /// Wall-clock seconds spent in `step` by this process.
    elapsed: f64,
    order: Option<(usize, Vec<usize>)>,
}

impl<T: Scalar> Trainer<T> {
    /// `corpus` holds `<bos> … <eos>` id sequences.
    pub fn new(params: Params<T>, corpus: Vec<Vec<u32>>, settings: TrainSettings) -> Result<Self, ModelError> {
        let adam = AdamState::new(&params);
        Self::with_state(params, adam, corpus, settings)
    }

    /// Continues from a checkpoint that carries optimizer state.
    pub fn resume(checkpoint: Checkpoint<T>, corpus: Vec<Vec<u32>>, settings: TrainSettings) -> Result<Self, ModelError> {
        let adam = checkpoint
            .adam
            .ok_or_else(|| ModelError::Checkpoint("checkpoint has no optimizer state".into()))?;
        Self::with_state(checkpoint.params, adam, corpus, settings)
    }

    fn with_state(
        params: Params<T>,
        adam: AdamState<T>,
        corpus: Vec<Vec<u32>>,
        settings: TrainSettings,
    ) -> Result<Self, ModelError> {
        if corpus.is_empty() {
            return Err(ModelError::EmptyCorpus);
        }
        if settings.batch_size == 0 || settings.chunk_size == 0 {
            return Err(ModelError::InvalidConfig("batch and chunk sizes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&settings.mask_rate) {
            return Err(ModelError::InvalidConfig(format!("mask rate {} is outside [0, 1]", settings.mask_rate)));
        }
        for seq in &corpus {
            check_ids(&params, seq)?;
            if seq.len() < 2 {
                return Err(ModelError::TargetTooShort(seq.len()));
            }
        }
        Ok(Trainer {
            params,
            adam,
            settings,
            corpus,
            log: TrainLog::default(),
            elapsed: 0.0,
            order: None,
        })
    }

    pub fn params(&self) -> &Params<T> {
        &self.params
    }

    pub fn into_params(self) -> Params<T> {
        self.params
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn settings(&self) -> &TrainSettings {
        &self.settings
    }

    /// Optimizer steps taken so far, including those before a resume.
    pub fn step_count(&self) -> usize {
        self.adam.step
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.corpus.len().div_ceil(self.settings.batch_size)
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            params: self.params.clone(),
            adam: Some(self.adam.clone()),
            step: self.adam.step,
        }
    }

    fn sample_index(&mut self, global: usize) -> usize {
        let n = self.corpus.len();
        let epoch = global / n;
        if self.order.as_ref().is_none_or(|(e, _)| *e != epoch) {
            let mut perm: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(mix(self.settings.seed, STREAM_ORDER, epoch as u64));
            perm.shuffle(&mut rng);
            self.order = Some((epoch, perm));
        }
        self.order.as_ref().unwrap().1[global % n]
    }

    /// The corrupted pairs that make up batch `step` (0-based).
    pub fn batch(&mut self, step: usize) -> Vec<CorruptedPair> {
        let b = self.settings.batch_size;
        (step * b..(step + 1) * b)
            .map(|g| {
                let i = self.sample_index(g);
                let mut rng = ChaCha8Rng::seed_from_u64(mix(self.settings.seed, STREAM_MASK, g as u64));
                corrupt(&self.corpus[i], self.settings.mask_rate, &mut rng)
            })
            .collect()
    }

    /// One optimizer update.
    pub fn step(&mut self) -> Result<StepRecord, ModelError> {
        let start = Instant::now();
        let step = self.adam.step;
        let pairs = self.batch(step);
        let tokens: usize = pairs.iter().map(|p| p.target.len() - 1).sum();
        let seed = self.settings.seed;
        let params = &self.params;
        let results: Vec<Result<(BatchStats, Gradients<T>), ModelError>> = pairs
            .par_chunks(self.settings.chunk_size)
            .enumerate()
            .map(|(c, chunk)| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ STREAM_DROPOUT, step as u64, c as u64));
                loss_and_gradients(params, chunk, tokens, Some(&mut rng))
            })
            .collect();
        let mut stats = BatchStats::default();
        let mut grads = Gradients::zeros_like(params);
        for r in results {
            let (s, g) = r?;
            stats.merge(&s);
            grads.add_assign(&g);
        }
        let loss = stats.mean_loss();
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { step: step + 1, loss });
        }
        let rate = self.settings.adam.rate_at(step + 1, self.settings.total_steps);
        self.adam.update(&mut self.params, &mut grads, &self.settings.adam, rate);
        if !self.params.all_finite() {
            return Err(ModelError::NonFiniteLoss { step: step + 1, loss });
        }
        self.elapsed += start.elapsed().as_secs_f64();
        let record = StepRecord {
            step: step + 1,
            loss,
            masked_acc: stats.masked_accuracy(),
            seconds: self.elapsed,
        };
        self.log.records.push(record);
        Ok(record)
    }

    /// Steps until `total_steps` is reached, writing `step_<n>.ckpt` files
    /// into `checkpoint_dir` at the configured interval.
    pub fn run(&mut self, checkpoint_dir: Option<&Path>) -> Result<Vec<PathBuf>, ModelError> {
        let mut written = Vec::new();
        while self.adam.step < self.settings.total_steps {
            let record = self.step()?;
            let every = self.settings.checkpoint_every;
            if let Some(dir) = checkpoint_dir.filter(|_| every > 0 && record.step % every == 0) {
                let path = dir.join(format!("step_{:06}.ckpt", record.step));
                self.checkpoint().save(&path)?;
                written.push(path);
            }
            if record.step % 50 == 0 {
                log::info!(
                    "step {} loss {:.4} masked_acc {:.3} ({:.1}s)",
                    record.step,
                    record.loss,
                    record.masked_acc,
                    record.seconds
                );
            }
        }
        Ok(written)
    }

    /// Evaluation loss over `pairs` with dropout off, in chunks.
    pub fn evaluate(&self, pairs: &[CorruptedPair]) -> Result<BatchStats, ModelError> {
        evaluate_pairs(&self.params, pairs, self.settings.chunk_size)
    }
}

/// Loss statistics for `pairs` with dropout off, computed chunk by chunk.
pub fn evaluate_pairs<T: Scalar>(params: &Params<T>, pairs: &[CorruptedPair], chunk: usize) -> Result<BatchStats, ModelError> {
    let results: Vec<Result<BatchStats, ModelError>> =
        pairs.par_chunks(chunk.max(1)).map(|c| evaluate(params, c)).collect();
    let mut total = BatchStats::default();
    for r in results {
        total.merge(&r?);
    }
    Ok(total)
}

/// A fixed set of corrupted copies of `seqs` for before/after comparisons.
pub fn fixed_pairs(seqs: &[Vec<u32>], mask_rate: f64, seed: u64) -> Vec<CorruptedPair> {
    seqs.iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, STREAM_MASK, i as u64));
            corrupt(s, mask_rate, &mut rng)
        })
        .collect()
}

/// Trains `params` on `corpus` for `settings.total_steps` steps.
pub fn train<T: Scalar>(
    params: Params<T>,
    corpus: Vec<Vec<u32>>,
    settings: TrainSettings,
    checkpoint_dir: Option<&Path>,
) -> Result<(Params<T>, TrainLog), ModelError> {
    let mut trainer = Trainer::new(params, corpus, settings)?;
    trainer.run(checkpoint_dir)?;
    let log = trainer.log.clone();
    Ok((trainer.into_params(), log))
}
