//! Property-probe harness against enumeration oracles and synthetic data.

#![allow(clippy::needless_range_loop)]

use std::collections::HashSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selfbart::corpus::smiles_to_selfies;
use selfbart::evalprop::{
    evaluate_probe, featurize, load_dataset, rmse, roc_auc, split, train_probe, Fold, Manifest, TaskType,
    DEFAULT_RATIOS, LAMBDA_GRID, MAX_ITERATIONS,
};
use selfbart::model::{embed, init_model, ModelConfig};
use selfbart::tokenizer::Vocabulary;

/// Counts every positive/negative pair: 1 for a win, 1/2 for a tie.
fn auc_by_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                total += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    total / pairs
}

fn random_scored(rng: &mut ChaCha8Rng, n: usize, coarse: bool) -> (Vec<f64>, Vec<bool>) {
    loop {
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
            let scores = (0..n)
                .map(|_| {
                    let s: f64 = rng.random_range(-3.0..3.0);
                    if coarse {
                        (s * 2.0).round() / 2.0
                    } else {
                        s
                    }
                })
                .collect();
            return (scores, labels);
        }
    }
}

#[test]
fn auc_matches_pair_enumeration_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for case in 0..50 {
        let n = rng.random_range(2..80);
        let (scores, labels) = random_scored(&mut rng, n, case % 2 == 0);
        let got = roc_auc(&scores, &labels).unwrap();
        let want = auc_by_pairs(&scores, &labels);
        assert!((got - want).abs() < 1e-12, "case {case}: {got} vs {want}");
    }
}

#[test]
fn rmse_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..50 {
        let n = rng.random_range(1..100);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let mut sq = 0.0;
        for i in 0..n {
            sq += (p[i] - y[i]) * (p[i] - y[i]);
        }
        let want = (sq / n as f64).sqrt();
        assert!((rmse(&p, &y).unwrap() - want).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn auc_is_invariant_under_monotone_maps(seed in any::<u64>(), n in 2usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (scores, labels) = random_scored(&mut rng, n, seed % 2 == 0);
        let base = roc_auc(&scores, &labels).unwrap();
        let cubed: Vec<f64> = scores.iter().map(|s| s * s * s + 2.0 * s).collect();
        let squashed: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect();
        prop_assert!((roc_auc(&cubed, &labels).unwrap() - base).abs() < 1e-12);
        prop_assert!((roc_auc(&squashed, &labels).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn negated_scores_flip_the_auc(seed in any::<u64>(), n in 2usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (scores, labels) = random_scored(&mut rng, n, false);
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let a = roc_auc(&scores, &labels).unwrap();
        prop_assert!((roc_auc(&neg, &labels).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn rmse_is_zero_only_on_exact_match_and_ignores_pair_order(
        pairs in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..50),
        rotate in 0usize..50,
    ) {
        let (p, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let r = rmse(&p, &y).unwrap();
        prop_assert!(r >= 0.0);
        prop_assert_eq!(r == 0.0, p == y);
        prop_assert_eq!(rmse(&p, &p).unwrap(), 0.0);
        let mut moved = pairs.clone();
        moved.rotate_left(rotate % pairs.len());
        let (p2, y2): (Vec<f64>, Vec<f64>) = moved.into_iter().unzip();
        prop_assert!((rmse(&p2, &y2).unwrap() - r).abs() <= 1e-12 * r.max(1.0));
    }

    #[test]
    fn splits_are_total_disjoint_and_sized(n in 1usize..400, seed in any::<u64>()) {
        let train = (n as f64 * 0.8).round() as usize;
        let valid = (n as f64 * 0.1).round() as usize;
        let test = n as i64 - (train + valid) as i64;
        let Ok(s) = split(n, DEFAULT_RATIOS, seed) else {
            prop_assert!(train == 0 || valid == 0 || test <= 0);
            return Ok(());
        };
        let folds: Vec<Vec<usize>> = [Fold::Train, Fold::Valid, Fold::Test].iter().map(|&f| s.indices(f)).collect();
        let all: HashSet<usize> = folds.iter().flatten().copied().collect();
        prop_assert_eq!(all.len(), n);
        let sizes: Vec<i64> = folds.iter().map(|f| f.len() as i64).collect();
        prop_assert_eq!(sizes, vec![train as i64, valid as i64, test]);
        prop_assert_eq!(split(n, DEFAULT_RATIOS, seed).unwrap(), s);
    }
}

#[test]
fn different_seeds_give_different_splits() {
    let assignments: Vec<Vec<usize>> = (0..100u64)
        .map(|seed| split(50, DEFAULT_RATIOS, seed).unwrap().indices(Fold::Test))
        .collect();
    let distinct: HashSet<&Vec<usize>> = assignments.iter().collect();
    assert_eq!(distinct.len(), 100);
}

#[test]
fn ridge_recovers_generating_weights_on_exact_linear_data() {
    // two-level factorial design: standardized columns are exactly orthogonal
    let d = 4;
    let scales = [1.0, 2.5, 4.0, 10.0];
    let offsets = [3.0, -1.0, 0.5, 7.0];
    let truth = [0.7, -1.3, 0.25, 2.0];
    let intercept = -0.4;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for code in 0..(1 << d) {
        let x: Vec<f64> = (0..d)
            .map(|j| offsets[j] + scales[j] * if code >> j & 1 == 1 { 1.0 } else { -1.0 })
            .collect();
        let y = intercept + x.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>();
        rows.push(x);
        labels.push(vec![Some(y)]);
    }
    let xs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let ys: Vec<&[Option<f64>]> = labels.iter().map(Vec::as_slice).collect();
    let probe = train_probe(&xs, &ys, TaskType::Regression, 0.0, MAX_ITERATIONS).unwrap();
    assert!(probe.iterations[0] < MAX_ITERATIONS);
    for j in 0..d {
        let raw = probe.weights[0][j] / probe.standardizer.stds[j];
        assert!((raw - truth[j]).abs() < 1e-6, "weight {j}: {raw} vs {}", truth[j]);
    }
    let mut probe_point = offsets.to_vec();
    probe_point[2] += 1.0;
    let want = intercept + probe_point.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>();
    assert!((probe.predict(&probe_point)[0] - want).abs() < 1e-5);
}

#[test]
fn test_fold_features_never_influence_model_selection() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 120;
    let features: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let text: String = std::iter::once("smiles,y\n".to_string())
        .chain(features.iter().map(|f| format!("C,{}\n", f[0] - 0.5 * f[1] + rng.random_range(-0.1..0.1))))
        .collect();
    let manifest = Manifest::parse("name=toy\ntask=regression\nlabels=y\n").unwrap();
    let (dataset, dropped) = load_dataset(text.as_bytes(), &manifest).unwrap();
    assert_eq!((dataset.records.len(), dropped), (n, 0));
    let kept: Vec<usize> = (0..n).collect();
    let base = evaluate_probe(&dataset, &features, &kept, DEFAULT_RATIOS, 3, &LAMBDA_GRID).unwrap();
    let test_rows: HashSet<usize> = split(n, DEFAULT_RATIOS, 3).unwrap().indices(Fold::Test).into_iter().collect();
    let mut shifted = features.clone();
    for &i in &test_rows {
        shifted[i].iter_mut().for_each(|v| *v = *v * 100.0 + 1e3);
    }
    let moved = evaluate_probe(&dataset, &shifted, &kept, DEFAULT_RATIOS, 3, &LAMBDA_GRID).unwrap();
    assert_eq!(moved.valid_score, base.valid_score);
    assert_eq!(moved.lambda, base.lambda);
    assert_ne!(moved.test_score, base.test_score);
}

#[test]
fn loading_counts_records_and_drops_bad_smiles() {
    let manifest = Manifest::parse("name=t\ntask=classification\nlabels=a,b\n").unwrap();
    let (d, dropped) = load_dataset("smiles,a,b\nCCO,1,0\nc1ccccc1,0,\nCN,,1\n".as_bytes(), &manifest).unwrap();
    assert_eq!((d.records.len(), dropped), (3, 0));
    assert_eq!(d.records[1].labels, vec![Some(0.0), None]);
    let (d, dropped) = load_dataset("smiles,a,b\nCCO,1,0\nC1CC,0,1\nCN,0,1\n".as_bytes(), &manifest).unwrap();
    assert_eq!((d.records.len(), dropped), (2, 1));
    assert!(load_dataset("smiles,a\nCCO,1\n".as_bytes(), &manifest).is_err());
    assert!(load_dataset("smiles,a,b\n".as_bytes(), &manifest).is_err());
}

#[test]
fn features_are_the_model_embeddings() {
    let smiles = ["CCO", "c1ccccc1O", "CCO", "CC(=O)N", "[Na+].[Cl-]"];
    let molecules: Vec<_> = smiles.iter().filter_map(|s| smiles_to_selfies(s).ok()).collect();
    let vocab = Vocabulary::build(molecules.iter().map(Vec::as_slice)).unwrap();
    let config = ModelConfig {
        d_model: 16,
        n_heads: 2,
        ff_dim: 32,
        max_len: 32,
        encoder_layers: 1,
        decoder_layers: 1,
        ..ModelConfig::desk(vocab.len())
    };
    let params = init_model::<f64>(&config, 5).unwrap();
    let text: String = std::iter::once("smiles,y\n".to_string())
        .chain(smiles.iter().enumerate().map(|(i, s)| format!("{s},{i}\n")))
        .collect();
    let manifest = Manifest::parse("name=t\ntask=regression\nlabels=y\n").unwrap();
    let (dataset, _) = load_dataset(text.as_bytes(), &manifest).unwrap();
    let (features, kept) = featurize(&dataset, &params, &vocab);
    // the charged salt has no SELFIES encoding and is left out
    assert_eq!(kept, vec![0, 1, 2, 3]);
    assert!(features.iter().all(|r| r.len() == 16));
    assert_eq!(features[0], features[2]);
    for (row, &i) in features.iter().zip(&kept) {
        let ids = vocab.encode_ids(&smiles_to_selfies(smiles[i]).unwrap());
        assert_eq!(row, &embed(&params, &ids).unwrap());
    }
}
