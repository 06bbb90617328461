//! Incremental decoding with cached keys and values, and unconditional
//! sampling.

use rand::Rng;

use super::forward::encode_seq;
use super::params::{Attention, Params};
use super::scalar::Scalar;
use super::tensor::{gelu, layer_norm, linear, softmax_in_place, Matrix};
use super::ModelError;
use crate::tokenizer::{BOS, EOS, MASK, PAD, UNK};

/// Decoder state after feeding a prefix one token at a time.
pub struct IncrementalDecoder<'p, T> {
    params: &'p Params<T>,
    cross: Vec<(Matrix<T>, Matrix<T>)>,
    keys: Vec<Vec<T>>,
    values: Vec<Vec<T>>,
    position: usize,
}

fn row<T: Scalar>(v: &[T]) -> Matrix<T> {
    Matrix::from_vec(1, v.len(), v.to_vec())
}

fn norm<T: Scalar>(params: &Params<T>, x: &Matrix<T>, n: super::params::Norm) -> Matrix<T> {
    layer_norm(x, &params.get(n.gamma).data, &params.get(n.beta).data).0
}

fn proj<T: Scalar>(params: &Params<T>, x: &Matrix<T>, w: usize, b: usize) -> Matrix<T> {
    linear(x, params.get(w), params.get(b))
}

/// One query row against `n` cached key/value rows, all heads.
fn attend_row<T: Scalar>(q: &[T], keys: &[T], values: &[T], n: usize, heads: usize) -> Vec<T> {
    let d = q.len();
    let hd = d / heads;
    let inv = T::one() / T::of(hd as f64).sqrt();
    let mut out = vec![T::zero(); d];
    let mut scores = vec![T::zero(); n];
    for h in 0..heads {
        let qh = &q[h * hd..(h + 1) * hd];
        for (j, s) in scores.iter_mut().enumerate() {
            let kh = &keys[j * d + h * hd..j * d + (h + 1) * hd];
            *s = qh.iter().zip(kh).map(|(&a, &b)| a * b).sum::<T>() * inv;
        }
        softmax_in_place(&mut scores);
        for (j, &p) in scores.iter().enumerate() {
            let vh = &values[j * d + h * hd..j * d + (h + 1) * hd];
            for (o, &v) in out[h * hd..(h + 1) * hd].iter_mut().zip(vh) {
                *o += p * v;
            }
        }
    }
    out
}

impl<'p, T: Scalar> IncrementalDecoder<'p, T> {
    pub fn new(params: &'p Params<T>, enc_states: &Matrix<T>) -> Self {
        let layers = &params.layout.decoder;
        let cross = layers
            .iter()
            .map(|l| {
                let a: &Attention = &l.cross_attn;
                (proj(params, enc_states, a.wk, a.bk), proj(params, enc_states, a.wv, a.bv))
            })
            .collect();
        IncrementalDecoder {
            params,
            cross,
            keys: vec![Vec::new(); layers.len()],
            values: vec![Vec::new(); layers.len()],
            position: 0,
        }
    }

    /// Number of tokens fed so far.
    pub fn len(&self) -> usize {
        self.position
    }

    pub fn is_empty(&self) -> bool {
        self.position == 0
    }

    /// Feeds the next token and returns logits for the one after it.
    pub fn step(&mut self, token: u32) -> Result<Vec<T>, ModelError> {
        let params = self.params;
        let cfg = &params.config;
        if token as usize >= cfg.vocab_size {
            return Err(ModelError::TokenOutOfRange {
                id: token,
                vocab: cfg.vocab_size,
            });
        }
        if self.position >= cfg.max_len {
            return Err(ModelError::SequenceTooLong {
                len: self.position + 1,
                max: cfg.max_len,
            });
        }
        let layout = &params.layout;
        let tok = params.get(layout.token_embedding).row(token as usize);
        let pos = params.get(layout.decoder_positions).row(self.position);
        let mut x = row(&tok.iter().zip(pos).map(|(&a, &b)| a + b).collect::<Vec<_>>());
        self.position += 1;
        for (i, layer) in layout.decoder.iter().enumerate() {
            let h = norm(params, &x, layer.norm1);
            let a = &layer.self_attn;
            let q = proj(params, &h, a.wq, a.bq);
            self.keys[i].extend(proj(params, &h, a.wk, a.bk).data);
            self.values[i].extend(proj(params, &h, a.wv, a.bv).data);
            let o = attend_row(&q.data, &self.keys[i], &self.values[i], self.position, cfg.n_heads);
            x.add_assign(&proj(params, &row(&o), a.wo, a.bo));

            let h = norm(params, &x, layer.norm2);
            let c = &layer.cross_attn;
            let q = proj(params, &h, c.wq, c.bq);
            let (ck, cv) = &self.cross[i];
            let o = attend_row(&q.data, &ck.data, &cv.data, ck.rows, cfg.n_heads);
            x.add_assign(&proj(params, &row(&o), c.wo, c.bo));

            let h = norm(params, &x, layer.norm3);
            let mut f = proj(params, &h, layer.ffn.w1, layer.ffn.b1);
            for v in &mut f.data {
                *v = gelu(*v);
            }
            x.add_assign(&proj(params, &f, layer.ffn.w2, layer.ffn.b2));
        }
        let x = norm(params, &x, layout.decoder_norm);
        let e = params.get(layout.token_embedding);
        Ok((0..e.rows)
            .map(|v| e.row(v).iter().zip(&x.data).map(|(&a, &b)| a * b).sum())
            .collect())
    }
}

/// Encoder states for unconditional generation: the `<bos> <eos>` input.
pub fn empty_source<T: Scalar>(params: &Params<T>) -> Matrix<T> {
    encode_seq(params, &[BOS, EOS], &[false, false]).expect("specials are always in range")
}

fn allowed(id: usize, eos_ok: bool) -> bool {
    ![PAD, BOS, MASK, UNK].contains(&(id as u32)) && (eos_ok || id as u32 != EOS)
}

/// Autoregressive sampling from `<bos>` with the encoder fed `<bos> <eos>`.
/// Returns ids starting with `<bos>`, ending with `<eos>`, at most
/// `max_len` long (capped by the model's own limit); `<eos>` is forced at
/// the last slot and never drawn before the first content token. Padding,
/// `<bos>`, `<mask>` and `<unk>` are never emitted.
pub fn sample<T: Scalar, R: Rng + ?Sized>(params: &Params<T>, rng: &mut R, max_len: usize, temperature: f64) -> Vec<u32> {
    assert!(temperature > 0.0, "temperature must be positive");
    generate(params, max_len, |logits, eos_ok| {
        let max = logits
            .iter()
            .enumerate()
            .filter(|(i, _)| allowed(*i, eos_ok))
            .map(|(_, v)| v.to_f64().unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if allowed(i, eos_ok) {
                    ((v.to_f64().unwrap() - max) / temperature).exp()
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut last = EOS;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                last = i as u32;
                if u < w {
                    return i as u32;
                }
                u -= w;
            }
        }
        last
    })
}

/// Greedy decoding under the same rules as [`sample`].
pub fn greedy<T: Scalar>(params: &Params<T>, max_len: usize) -> Vec<u32> {
    generate(params, max_len, |logits, eos_ok| {
        let mut best = EOS;
        let mut best_v = T::neg_infinity();
        for (i, &v) in logits.iter().enumerate() {
            if allowed(i, eos_ok) && v > best_v {
                best = i as u32;
                best_v = v;
            }
        }
        best
    })
}

fn generate<T: Scalar>(params: &Params<T>, max_len: usize, mut pick: impl FnMut(&[T], bool) -> u32) -> Vec<u32> {
    let limit = max_len.min(params.config.max_len).max(2);
    let enc = empty_source(params);
    let mut dec = IncrementalDecoder::new(params, &enc);
    let mut out = vec![BOS];
    loop {
        if out.len() == limit - 1 {
            out.push(EOS);
            return out;
        }
        let logits = dec.step(*out.last().unwrap()).expect("generated ids stay in range");
        let next = pick(&logits, out.len() > 1);
        out.push(next);
        if next == EOS {
            return out;
        }
    }
}
