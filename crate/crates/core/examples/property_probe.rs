//! Fits ridge probes on mean-pooled encoder embeddings of a briefly trained
//! model and of an untrained one, for a regression and a classification
//! label of the bundled property table.
//!
//! cargo run --release --example property_probe -- [steps] [rows]

use selfbart::corpus::{id_sequences, load_smiles};
use selfbart::evalprop::{evaluate_probe, featurize, load_dataset, Manifest, DEFAULT_RATIOS, LAMBDA_GRID};
use selfbart::model::{init_model, ModelConfig, Params, TrainSettings, Trainer};
use selfbart::tokenizer::Vocabulary;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(300);
    let rows: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(600);

    let corpus = load_smiles(include_str!("../data/corpus.smi").as_bytes())?;
    let molecules = &corpus.molecules[..3000];
    let vocab = Vocabulary::build(molecules.iter().map(Vec::as_slice))?;
    let config = ModelConfig {
        d_model: 64,
        ff_dim: 256,
        ..ModelConfig::desk(vocab.len())
    };
    let (seqs, _) = id_sequences(&vocab, molecules, config.max_len);
    let settings = TrainSettings {
        total_steps: steps,
        seed: 2,
        ..TrainSettings::default()
    };
    let mut trainer = Trainer::new(init_model::<f32>(&config, 2)?, seqs, settings)?;
    for _ in 0..steps {
        trainer.step()?;
    }
    let trained = trainer.into_params();
    let untrained: Params<f32> = init_model(&config, 7)?;

    let table: String = include_str!("../data/properties.csv").lines().take(rows + 1).map(|l| format!("{l}\n")).collect();
    for manifest in [
        "name=logp\ntask=regression\nlabels=logp\n",
        "name=high_logp\ntask=classification\nlabels=high_logp\n",
    ] {
        let manifest = Manifest::parse(manifest)?;
        let (dataset, dropped) = load_dataset(table.as_bytes(), &manifest)?;
        println!("{} ({} rows, {dropped} dropped)", dataset.name, dataset.records.len());
        for (label, params) in [("trained", &trained), ("untrained", &untrained)] {
            let (features, kept) = featurize(&dataset, params, &vocab);
            let r = evaluate_probe(&dataset, &features, &kept, DEFAULT_RATIOS, 0, &LAMBDA_GRID)?;
            println!(
                "  {label:<9} test {} {:.4} (valid {:.4}, lambda {})",
                r.metric, r.test_score, r.valid_score, r.lambda
            );
        }
    }
    Ok(())
}
