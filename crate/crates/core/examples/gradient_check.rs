//! Compares analytic gradients of the denoising loss with central finite
//! differences on a small 64-bit model and prints the worst tensor errors.
//!
//! cargo run --release --example gradient_check

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selfbart::model::{denoise_loss, init_model, ModelConfig};
use selfbart::tokenizer::{CorruptedPair, BOS, EOS, MASK};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ModelConfig {
        vocab_size: 30,
        d_model: 16,
        n_heads: 2,
        encoder_layers: 1,
        decoder_layers: 1,
        ff_dim: 32,
        max_len: 10,
        dropout: 0.0,
    };
    let mut params = init_model::<f64>(&config, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (id, t) in params.tensors.iter_mut().enumerate() {
        let gain = if params.layout.name(id).ends_with("gamma") { 1.0 } else { 0.0 };
        for v in &mut t.data {
            *v = gain + rng.random_range(-0.5..0.5);
        }
    }
    let pair = CorruptedPair {
        input: vec![BOS, 7, MASK, 12, 9, EOS],
        target: vec![BOS, 7, 20, 12, 9, EOS],
        mask_positions: vec![2],
    };
    let (loss, grads) = denoise_loss(&params, &pair)?;
    println!("loss {loss:.6}, {} parameters", params.count());

    let h = 1e-5;
    let mut probe = params.clone();
    for id in 0..params.tensors.len() {
        let mut worst = 0.0f64;
        for j in 0..params.tensors[id].data.len() {
            let orig = probe.tensors[id].data[j];
            probe.tensors[id].data[j] = orig + h;
            let up = denoise_loss(&probe, &pair)?.0;
            probe.tensors[id].data[j] = orig - h;
            let down = denoise_loss(&probe, &pair)?.0;
            probe.tensors[id].data[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.tensors[id].data[j];
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
        }
        println!("{:<32} worst relative error {worst:.2e}", params.layout.name(id));
    }
    Ok(())
}
