//! Trains a small model briefly, samples molecules from it and prints the
//! generation report: validity, unique@k, novelty and internal diversity.
//!
//! cargo run --release --example generate_and_score -- [steps] [samples]

use std::collections::HashSet;

use selfbart::corpus::{id_sequences, load_smiles};
use selfbart::evalgen::{generate_set, report};
use selfbart::model::{init_model, ModelConfig, TrainSettings, Trainer};
use selfbart::molgraph::{DEFAULT_RADIUS, DEFAULT_WIDTH};
use selfbart::tokenizer::Vocabulary;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(300);
    let n: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(500);

    let text: String = include_str!("../data/corpus.smi").lines().take(2000).map(|l| format!("{l}\n")).collect();
    let corpus = load_smiles(text.as_bytes())?;
    let vocab = Vocabulary::build(corpus.molecules.iter().map(Vec::as_slice))?;
    let config = ModelConfig {
        d_model: 64,
        ff_dim: 256,
        ..ModelConfig::desk(vocab.len())
    };
    let (seqs, _) = id_sequences(&vocab, &corpus.molecules, config.max_len);
    let settings = TrainSettings {
        total_steps: steps,
        seed: 3,
        ..TrainSettings::default()
    };
    let mut trainer = Trainer::new(init_model::<f32>(&config, 3)?, seqs, settings)?;
    for _ in 0..steps {
        trainer.step()?;
    }
    let last = trainer.log().records.last().map_or(f64::NAN, |r| r.loss);
    println!("trained {steps} steps, last batch loss {last:.4}");

    let set = generate_set(trainer.params(), &vocab, n, 5, 1.0, "example");
    for line in set.selfies.iter().take(5) {
        println!("  {line}");
    }
    let training: HashSet<_> = corpus.canonical.iter().cloned().collect();
    let r = report(&set, n, &training, DEFAULT_RADIUS, DEFAULT_WIDTH)?;
    print!("{}", r.table());
    Ok(())
}
