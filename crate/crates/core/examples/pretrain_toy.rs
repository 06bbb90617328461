//! Denoising pretraining of the default desk-size model on the bundled
//! corpus, reporting loss and masked-token accuracy on unseen molecules as
//! it goes.
//!
//! cargo run --release --example pretrain_toy -- [molecules] [seconds]

use std::time::Instant;

use selfbart::corpus::{id_sequences, load_smiles};
use selfbart::model::train::fixed_pairs;
use selfbart::model::{init_model, ModelConfig, TrainSettings, Trainer};
use selfbart::tokenizer::{Vocabulary, DEFAULT_MASK_RATE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(5000);
    let budget: f64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(120.0);

    let text = include_str!("../data/corpus.smi");
    let corpus = load_smiles(text.as_bytes())?;
    let n = n.min(corpus.molecules.len() - 256);
    let molecules = &corpus.molecules[..n];
    let vocab = Vocabulary::build(molecules.iter().map(Vec::as_slice))?;
    let config = ModelConfig::desk(vocab.len());
    let (seqs, dropped) = id_sequences(&vocab, molecules, config.max_len);
    println!("{} molecules ({} too long), vocabulary {}", seqs.len(), dropped, vocab.len());

    let (unseen, _) = id_sequences(&vocab, &corpus.molecules[n..n + 256], config.max_len);
    let held_out = fixed_pairs(&unseen, DEFAULT_MASK_RATE, 7);
    let settings = TrainSettings {
        total_steps: 4000,
        seed: 1,
        ..TrainSettings::default()
    };
    let mut trainer = Trainer::new(init_model::<f32>(&config, 1)?, seqs, settings)?;
    let start = Instant::now();
    let initial = trainer.evaluate(&held_out)?;
    println!("step 0: loss {:.4} masked acc {:.3}", initial.mean_loss(), initial.masked_accuracy());
    while start.elapsed().as_secs_f64() < budget {
        for _ in 0..50 {
            trainer.step()?;
        }
        let s = trainer.evaluate(&held_out)?;
        println!(
            "step {}: loss {:.4} masked acc {:.3} ({:.0}s)",
            trainer.step_count(),
            s.mean_loss(),
            s.masked_accuracy(),
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
