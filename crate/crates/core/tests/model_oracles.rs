//! Transformer checks against independent oracles: central finite
//! differences, a hand-written forward pass, a closed-form parameter count,
//! and equivalences between the batched, stepwise and cached code paths.

#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selfbart::model::forward::loss_and_gradients;
use selfbart::model::infer::empty_source;
use selfbart::model::train::fixed_pairs;
use selfbart::model::{
    decode_step, decoder_logits, denoise_loss, embed, encode_seq, greedy, init_model, sample, Checkpoint,
    IncrementalDecoder, Matrix, ModelConfig, ModelError, Params, TrainSettings, Trainer,
};
use selfbart::tokenizer::{corrupt, CorruptedPair, BOS, EOS, MASK, PAD};

fn toy(vocab: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab,
        d_model: 16,
        n_heads: 2,
        encoder_layers: 1,
        decoder_layers: 1,
        ff_dim: 32,
        max_len: 10,
        dropout: 0.0,
    }
}

/// Replaces every weight with a draw from [-0.5, 0.5) (layer-norm gains
/// around 1) so that no gradient is vanishingly small.
fn scramble(params: &mut Params<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (id, t) in params.tensors.iter_mut().enumerate() {
        let gain = params.layout.name(id).ends_with("gamma");
        for v in &mut t.data {
            *v = rng.random_range(-0.5..0.5) + if gain { 1.0 } else { 0.0 };
        }
    }
}

fn pair(input: &[u32], target: &[u32]) -> CorruptedPair {
    CorruptedPair {
        input: input.to_vec(),
        target: target.to_vec(),
        mask_positions: input.iter().enumerate().filter(|(_, &t)| t == MASK).map(|(i, _)| i).collect(),
    }
}

/// Relative error with magnitudes below 1e-6 treated as 1e-6: key biases
/// have an exactly zero gradient (softmax ignores a shift shared by a whole
/// row) and there the central difference is pure rounding noise of order
/// 1e-11.
fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn check_gradients(params: &Params<f64>, loss: impl Fn(&Params<f64>) -> f64, analytic: &[Matrix<f64>]) {
    let h = 1e-5;
    let mut probe = params.clone();
    let mut worst = (0.0, String::new());
    let mut checked = 0;
    for id in 0..params.tensors.len() {
        for j in 0..params.tensors[id].data.len() {
            let orig = probe.tensors[id].data[j];
            probe.tensors[id].data[j] = orig + h;
            let up = loss(&probe);
            probe.tensors[id].data[j] = orig - h;
            let down = loss(&probe);
            probe.tensors[id].data[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = relative_error(analytic[id].data[j], numeric);
            if err > worst.0 {
                worst = (err, format!("{}[{j}] analytic {} numeric {numeric}", params.layout.name(id), analytic[id].data[j]));
            }
            checked += 1;
        }
    }
    assert!(worst.0 < 1e-4, "worst relative error {:e} at {}", worst.0, worst.1);
    assert_eq!(checked, params.count());
}

#[test]
fn every_gradient_matches_central_differences() {
    let mut params = init_model::<f64>(&toy(20), 1).unwrap();
    scramble(&mut params, 2);
    let p = pair(&[BOS, 7, MASK, 9, 5, EOS], &[BOS, 7, 12, 9, 5, EOS]);
    let (_, grads) = denoise_loss(&params, &p).unwrap();
    check_gradients(&params, |q| denoise_loss(q, &p).unwrap().0, &grads.tensors);
}

#[test]
fn batched_gradients_with_dropout_match_central_differences() {
    let cfg = ModelConfig {
        dropout: 0.2,
        n_heads: 4,
        ..toy(14)
    };
    let mut params = init_model::<f64>(&cfg, 3).unwrap();
    scramble(&mut params, 4);
    let pairs = vec![
        pair(&[BOS, MASK, 6, EOS], &[BOS, 8, 6, EOS]),
        pair(&[BOS, 13, 5, 5, MASK, 9, 10, EOS], &[BOS, 13, 5, 5, 11, 9, 10, EOS]),
        pair(&[BOS, EOS], &[BOS, 7, EOS]),
    ];
    let run = |q: &Params<f64>| {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        loss_and_gradients(q, &pairs, 13, Some(&mut rng)).unwrap()
    };
    let (_, grads) = run(&params);
    check_gradients(&params, |q| run(q).0.nll_sum / 13.0, &grads.tensors);
}

#[test]
fn parameter_count_matches_closed_form() {
    let (v, d, ff, len) = (50usize, 32usize, 64usize, 16usize);
    let cfg = ModelConfig {
        vocab_size: v,
        d_model: d,
        n_heads: 4,
        encoder_layers: 2,
        decoder_layers: 2,
        ff_dim: ff,
        max_len: len,
        dropout: 0.1,
    };
    let attention = 4 * (d * d + d);
    let ffn = d * ff + ff + ff * d + d;
    let norm = 2 * d;
    let encoder_layer = 2 * norm + attention + ffn;
    let decoder_layer = 3 * norm + 2 * attention + ffn;
    let expected = v * d + 2 * len * d + 2 * encoder_layer + 2 * decoder_layer + 2 * norm;
    assert_eq!(init_model::<f32>(&cfg, 0).unwrap().count(), expected);
    assert_eq!(expected, 1600 + 1024 + 2 * 8544 + 2 * 12832 + 128);
}

#[test]
fn zeroed_output_projection_gives_uniform_loss() {
    for vocab in [7usize, 20, 45] {
        let mut params = init_model::<f64>(&toy(vocab), 5).unwrap();
        let e = params.layout.token_embedding;
        params.tensors[e].data.fill(0.0);
        let p = pair(&[BOS, MASK, 5, EOS], &[BOS, 6, 5, EOS]);
        let (loss, _) = denoise_loss(&params, &p).unwrap();
        assert!((loss - (vocab as f64).ln()).abs() < 1e-12, "{loss}");
    }
}

fn ln(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    x.iter()
        .enumerate()
        .map(|(i, v)| (v - mean) / (var + 1e-5).sqrt() * g[i] + b[i])
        .collect()
}

fn affine(x: &[f64], w: &Matrix<f64>, b: &Matrix<f64>) -> Vec<f64> {
    (0..w.cols)
        .map(|j| b.data[j] + (0..w.rows).map(|i| x[i] * w.data[i * w.cols + j]).sum::<f64>())
        .collect()
}

#[test]
fn single_token_encoder_matches_hand_computation() {
    let cfg = ModelConfig {
        vocab_size: 6,
        d_model: 2,
        n_heads: 1,
        encoder_layers: 1,
        decoder_layers: 1,
        ff_dim: 2,
        max_len: 4,
        dropout: 0.0,
    };
    let mut params = init_model::<f64>(&cfg, 8).unwrap();
    scramble(&mut params, 9);
    let get = |name: &str| params.tensors[params.layout.find(name).unwrap()].clone();
    let id = 4usize;
    // with one key the attention weight is 1 and the output is the value row
    let x: Vec<f64> = (0..2)
        .map(|j| get("embed.tokens").data[id * 2 + j] + get("encoder.positions").data[j])
        .collect();
    let h = ln(&x, &get("encoder.0.norm1.gamma").data, &get("encoder.0.norm1.beta").data);
    let v = affine(&h, &get("encoder.0.attn.wv"), &get("encoder.0.attn.bv"));
    let o = affine(&v, &get("encoder.0.attn.wo"), &get("encoder.0.attn.bo"));
    let x: Vec<f64> = x.iter().zip(&o).map(|(a, b)| a + b).collect();
    let h = ln(&x, &get("encoder.0.norm2.gamma").data, &get("encoder.0.norm2.beta").data);
    let a: Vec<f64> = affine(&h, &get("encoder.0.ffn.w1"), &get("encoder.0.ffn.b1"))
        .into_iter()
        .map(|z| 0.5 * z * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (z + 0.044715 * z.powi(3))).tanh()))
        .collect();
    let f = affine(&a, &get("encoder.0.ffn.w2"), &get("encoder.0.ffn.b2"));
    let x: Vec<f64> = x.iter().zip(&f).map(|(a, b)| a + b).collect();
    let expected = ln(&x, &get("encoder.norm.gamma").data, &get("encoder.norm.beta").data);

    let out = encode_seq(&params, &[id as u32], &[false]).unwrap();
    assert_eq!((out.rows, out.cols), (1, 2));
    for j in 0..2 {
        assert!((out.data[j] - expected[j]).abs() < 1e-12, "{:?} vs {expected:?}", out.data);
    }
}

#[test]
fn encoder_shapes_and_input_errors() {
    let params = init_model::<f64>(&toy(12), 1).unwrap();
    for len in 1..=10 {
        let ids: Vec<u32> = (0..len).map(|i| 5 + (i % 7) as u32).collect();
        let out = encode_seq(&params, &ids, &vec![false; len]).unwrap();
        assert_eq!((out.rows, out.cols), (len, 16));
        assert!(out.data.iter().all(|v| v.is_finite()));
    }
    assert!(matches!(
        encode_seq(&params, &[5; 11], &[false; 11]),
        Err(ModelError::SequenceTooLong { len: 11, max: 10 })
    ));
    assert!(matches!(
        encode_seq(&params, &[5, 12], &[false; 2]),
        Err(ModelError::TokenOutOfRange { id: 12, .. })
    ));
}

#[test]
fn pad_content_does_not_reach_other_positions() {
    let mut params = init_model::<f64>(&toy(12), 1).unwrap();
    scramble(&mut params, 3);
    let pad = [false, false, false, false, true, true];
    let a = encode_seq(&params, &[BOS, 6, 7, EOS, 9, 11], &pad).unwrap();
    let b = encode_seq(&params, &[BOS, 6, 7, EOS, 11, 9], &pad).unwrap();
    let c = encode_seq(&params, &[BOS, 6, 7, EOS, PAD, PAD], &pad).unwrap();
    for r in 0..4 {
        assert_eq!(a.row(r), b.row(r));
        assert_eq!(a.row(r), c.row(r));
    }
}

#[test]
fn decoder_is_causal_and_matches_cached_steps() {
    let mut params = init_model::<f64>(&toy(12), 4).unwrap();
    scramble(&mut params, 5);
    let enc = encode_seq(&params, &[BOS, 6, 8, EOS], &[false; 4]).unwrap();
    let full = [BOS, 7, 7, 10, 6, 11, EOS];
    let all = decoder_logits(&params, &enc, &full).unwrap();
    assert_eq!(all.cols, 12);
    let mut cached = IncrementalDecoder::new(&params, &enc);
    for t in 1..=full.len() {
        let short = decoder_logits(&params, &enc, &full[..t]).unwrap();
        for r in 0..t {
            for (x, y) in short.row(r).iter().zip(all.row(r)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let step = decode_step(&params, &enc, &full[..t]).unwrap();
        assert_eq!(step.len(), 12);
        let inc = cached.step(full[t - 1]).unwrap();
        for (x, y) in step.iter().zip(&inc) {
            assert!((x - y).abs() < 1e-10, "{x} {y}");
        }
    }
    assert!(matches!(decode_step(&params, &enc, &[]), Err(ModelError::EmptyPrefix)));
    assert!(matches!(decode_step(&params, &enc, &[7]), Err(ModelError::MissingBos)));
}

#[test]
fn greedy_chain_equals_teacher_forced_argmax() {
    let mut params = init_model::<f64>(&toy(12), 6).unwrap();
    scramble(&mut params, 7);
    let argmax = |row: &[f64]| {
        (0..row.len())
            .max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap())
            .unwrap() as u32
    };
    let enc = encode_seq(&params, &[BOS, 9, 6, 6, EOS], &[false; 5]).unwrap();
    let mut chain = vec![BOS];
    while chain.len() < 10 {
        let next = argmax(&decode_step(&params, &enc, &chain).unwrap());
        chain.push(next);
    }
    let forced = decoder_logits(&params, &enc, &chain[..9]).unwrap();
    for t in 0..9 {
        assert_eq!(argmax(forced.row(t)), chain[t + 1]);
    }
}

#[test]
fn embedding_is_mean_of_content_states() {
    let mut params = init_model::<f64>(&toy(12), 2).unwrap();
    scramble(&mut params, 11);
    let ids = [BOS, 6, 9, 9, 7, EOS];
    let states = encode_seq(&params, &ids, &[false; 6]).unwrap();
    let e = embed(&params, &ids).unwrap();
    for j in 0..16 {
        let mean = (1..5).map(|r| states.row(r)[j]).sum::<f64>() / 4.0;
        assert!((e[j] - mean).abs() < 1e-12);
    }
    let single = embed(&params, &[BOS, 8, EOS]).unwrap();
    let states = encode_seq(&params, &[BOS, 8, EOS], &[false; 3]).unwrap();
    assert_eq!(single, states.row(1));
    assert_eq!(embed(&params, &ids).unwrap(), e);
    assert!(matches!(embed(&params, &[BOS, EOS]), Err(ModelError::NoContent)));
}

#[test]
fn sampling_rules() {
    let mut params = init_model::<f64>(&toy(12), 12).unwrap();
    scramble(&mut params, 13);
    let g = greedy(&params, 10);
    let cold = sample(&params, &mut ChaCha8Rng::seed_from_u64(1), 10, 1e-9);
    assert_eq!(cold, g);
    let a = sample(&params, &mut ChaCha8Rng::seed_from_u64(42), 10, 1.0);
    let b = sample(&params, &mut ChaCha8Rng::seed_from_u64(42), 10, 1.0);
    assert_eq!(a, b);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let s = sample(&params, &mut rng, 8, 1.5);
        assert_eq!(s[0], BOS);
        assert_eq!(*s.last().unwrap(), EOS);
        assert!(s.len() >= 3 && s.len() <= 8);
        assert!(s[1..].iter().all(|&t| t == EOS || t >= 5));
        assert_eq!(s.iter().filter(|&&t| t == EOS).count(), 1);
    }
    // greedy equals the cached decoder fed its own argmax
    let enc = empty_source(&params);
    assert_eq!(decode_step(&params, &enc, &g[..g.len() - 1]).unwrap().len(), 12);
}

#[test]
fn overfitting_one_example_drives_loss_to_zero() {
    let cfg = ModelConfig {
        max_len: 12,
        ..toy(16)
    };
    let params = init_model::<f32>(&cfg, 21).unwrap();
    let seq = vec![BOS, 5, 9, 6, 12, 15, 7, 7, 10, EOS];
    let settings = TrainSettings {
        batch_size: 1,
        total_steps: 200,
        mask_rate: 0.0,
        seed: 3,
        adam: selfbart::model::AdamSettings {
            learning_rate: 3e-3,
            warmup_fraction: 0.0,
            ..Default::default()
        },
        ..TrainSettings::default()
    };
    let mut trainer = Trainer::new(params, vec![seq.clone()], settings).unwrap();
    let clean = fixed_pairs(&[seq], 0.0, 0);
    let mut checkpoints = vec![trainer.evaluate(&clean).unwrap().mean_loss()];
    for _ in 0..4 {
        for _ in 0..50 {
            trainer.step().unwrap();
        }
        checkpoints.push(trainer.evaluate(&clean).unwrap().mean_loss());
    }
    assert!(checkpoints.windows(2).all(|w| w[1] < w[0]), "{checkpoints:?}");
    assert!(*checkpoints.last().unwrap() < 0.05, "{checkpoints:?}");
}

fn toy_corpus(n: usize, seed: u64) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(2..9);
            std::iter::once(BOS)
                .chain((0..len).map(|_| rng.random_range(5..16)))
                .chain(std::iter::once(EOS))
                .collect()
        })
        .collect()
}

#[test]
fn resumed_run_continues_identically() {
    let cfg = ModelConfig {
        dropout: 0.1,
        max_len: 12,
        ..toy(16)
    };
    let corpus = toy_corpus(40, 5);
    let settings = TrainSettings {
        batch_size: 6,
        total_steps: 16,
        seed: 77,
        checkpoint_every: 8,
        chunk_size: 4,
        ..TrainSettings::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut full = Trainer::new(init_model::<f32>(&cfg, 1).unwrap(), corpus.clone(), settings.clone()).unwrap();
    let written = full.run(Some(dir.path())).unwrap();
    assert_eq!(written.len(), 2);

    let ck = Checkpoint::<f32>::load(&written[0]).unwrap();
    assert_eq!(ck.step, 8);
    let mut resumed = Trainer::resume(ck, corpus, settings).unwrap();
    resumed.run(None).unwrap();
    let strip = |log: &[selfbart::model::StepRecord]| log.iter().map(|r| (r.step, r.loss, r.masked_acc)).collect::<Vec<_>>();
    assert_eq!(strip(&resumed.log().records), strip(&full.log().records[8..]));
    assert_eq!(resumed.params().tensors, full.params().tensors);
}

#[test]
fn copy_task_is_learned_faster_without_masking() {
    let cfg = ModelConfig {
        max_len: 12,
        ..toy(16)
    };
    let corpus = toy_corpus(200, 9);
    let run = |mask_rate: f64| {
        let settings = TrainSettings {
            batch_size: 16,
            total_steps: 120,
            mask_rate,
            seed: 5,
            adam: selfbart::model::AdamSettings {
                learning_rate: 2e-3,
                ..Default::default()
            },
            ..TrainSettings::default()
        };
        let mut t = Trainer::new(init_model::<f32>(&cfg, 2).unwrap(), corpus.clone(), settings).unwrap();
        t.run(None).unwrap();
        t.evaluate(&fixed_pairs(&corpus, mask_rate, 1)).unwrap().mean_loss()
    };
    let unmasked = run(0.0);
    let masked = run(0.15);
    assert!(unmasked < masked, "unmasked {unmasked} masked {masked}");
}

#[test]
fn corruption_is_seed_determined_in_training_batches() {
    let corpus = toy_corpus(10, 1);
    let settings = TrainSettings {
        batch_size: 4,
        seed: 8,
        ..TrainSettings::default()
    };
    let mk = || Trainer::new(init_model::<f32>(&toy(16), 1).unwrap(), corpus.clone(), settings.clone()).unwrap();
    let (mut a, mut b) = (mk(), mk());
    assert_eq!(a.batch(3), b.batch(3));
    // batches walk through whole epochs: 10 samples cover steps 0..=2
    let mut seen: Vec<Vec<u32>> = (0..3).flat_map(|s| a.batch(s)).map(|p| p.target).take(10).collect();
    let mut all = corpus.clone();
    seen.sort();
    all.sort();
    assert_eq!(seen, all);
    let _ = corrupt(&corpus[0], 0.5, &mut ChaCha8Rng::seed_from_u64(0));
}
