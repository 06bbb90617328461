//! Pre-layer-norm encoder/decoder forward passes on the tape, the denoising
//! loss, and embedding extraction.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{Attention, FeedForward, Gradients, Params};
use super::scalar::Scalar;
use super::tape::{NodeId, Segment, Tape};
use super::tensor::{gemm, Matrix, View};
use super::ModelError;
use crate::tokenizer::{is_content, CorruptedPair, BOS};

/// Totals over a batch of denoising pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchStats {
    /// Sum of per-token negative log-likelihoods.
    pub nll_sum: f64,
    pub tokens: usize,
    pub masked: usize,
    pub masked_correct: usize,
}

impl BatchStats {
    pub fn mean_loss(&self) -> f64 {
        self.nll_sum / self.tokens.max(1) as f64
    }

    pub fn masked_accuracy(&self) -> f64 {
        if self.masked == 0 {
            0.0
        } else {
            self.masked_correct as f64 / self.masked as f64
        }
    }

    pub fn merge(&mut self, other: &BatchStats) {
        self.nll_sum += other.nll_sum;
        self.tokens += other.tokens;
        self.masked += other.masked;
        self.masked_correct += other.masked_correct;
    }
}

pub(crate) fn check_ids<T>(params: &Params<T>, ids: &[u32]) -> Result<(), ModelError> {
    let cfg = &params.config;
    if ids.len() > cfg.max_len {
        return Err(ModelError::SequenceTooLong {
            len: ids.len(),
            max: cfg.max_len,
        });
    }
    match ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        Some(&id) => Err(ModelError::TokenOutOfRange {
            id,
            vocab: cfg.vocab_size,
        }),
        None => Ok(()),
    }
}

struct Packed {
    ids: Vec<u32>,
    positions: Vec<usize>,
    starts: Vec<usize>,
    lens: Vec<usize>,
}

fn pack(seqs: &[&[u32]]) -> Packed {
    let mut p = Packed {
        ids: Vec::new(),
        positions: Vec::new(),
        starts: Vec::new(),
        lens: Vec::new(),
    };
    for s in seqs {
        p.starts.push(p.ids.len());
        p.lens.push(s.len());
        p.ids.extend_from_slice(s);
        p.positions.extend(0..s.len());
    }
    p
}

fn self_segments(p: &Packed) -> Vec<Segment> {
    p.starts
        .iter()
        .zip(&p.lens)
        .map(|(&s, &n)| Segment {
            q_start: s,
            q_len: n,
            k_start: s,
            k_len: n,
        })
        .collect()
}

fn cross_segments(q: &Packed, k: &Packed) -> Vec<Segment> {
    (0..q.starts.len())
        .map(|i| Segment {
            q_start: q.starts[i],
            q_len: q.lens[i],
            k_start: k.starts[i],
            k_len: k.lens[i],
        })
        .collect()
}

type Dropout<'r> = Option<&'r mut ChaCha8Rng>;

struct Ctx<'a, 'p, 'r, T> {
    tape: &'a mut Tape<'p, T>,
    rate: f64,
    rng: Dropout<'r>,
    heads: usize,
}

impl<T: Scalar> Ctx<'_, '_, '_, T> {
    fn drop(&mut self, x: NodeId) -> NodeId {
        self.tape.dropout(x, self.rate, self.rng.as_deref_mut())
    }

    #[allow(clippy::too_many_arguments)]
    fn attend(
        &mut self,
        a: &Attention,
        x: NodeId,
        src: NodeId,
        segments: &[Segment],
        causal: bool,
        key_valid: Option<&[bool]>,
    ) -> NodeId {
        let q = self.tape.linear(x, a.wq, a.bq);
        let k = self.tape.linear(src, a.wk, a.bk);
        let v = self.tape.linear(src, a.wv, a.bv);
        let o = self.tape.attention(q, k, v, self.heads, segments, causal, key_valid);
        self.tape.linear(o, a.wo, a.bo)
    }

    fn feed_forward(&mut self, f: &FeedForward, x: NodeId) -> NodeId {
        let h = self.tape.linear(x, f.w1, f.b1);
        let h = self.tape.gelu(h);
        self.tape.linear(h, f.w2, f.b2)
    }

    fn residual(&mut self, x: NodeId, delta: NodeId) -> NodeId {
        let delta = self.drop(delta);
        self.tape.add(x, delta)
    }

    fn encoder(&mut self, src: &Packed, key_valid: Option<&[bool]>) -> NodeId {
        let params = self.tape.params();
        let layout = &params.layout;
        let segments = self_segments(src);
        let x = self
            .tape
            .embed(&src.ids, &src.positions, layout.token_embedding, layout.encoder_positions);
        let mut x = self.drop(x);
        for layer in &layout.encoder {
            let h = self.tape.layer_norm(x, layer.norm1.gamma, layer.norm1.beta);
            let a = self.attend(&layer.attn, h, h, &segments, false, key_valid);
            x = self.residual(x, a);
            let h = self.tape.layer_norm(x, layer.norm2.gamma, layer.norm2.beta);
            let f = self.feed_forward(&layer.ffn, h);
            x = self.residual(x, f);
        }
        self.tape.layer_norm(x, layout.encoder_norm.gamma, layout.encoder_norm.beta)
    }

    fn decoder(&mut self, dec: &Packed, enc: NodeId, src: &Packed, key_valid: Option<&[bool]>) -> NodeId {
        let params = self.tape.params();
        let layout = &params.layout;
        let own = self_segments(dec);
        let cross = cross_segments(dec, src);
        let x = self
            .tape
            .embed(&dec.ids, &dec.positions, layout.token_embedding, layout.decoder_positions);
        let mut x = self.drop(x);
        for layer in &layout.decoder {
            let h = self.tape.layer_norm(x, layer.norm1.gamma, layer.norm1.beta);
            let a = self.attend(&layer.self_attn, h, h, &own, true, None);
            x = self.residual(x, a);
            let h = self.tape.layer_norm(x, layer.norm2.gamma, layer.norm2.beta);
            let c = self.attend(&layer.cross_attn, h, enc, &cross, false, key_valid);
            x = self.residual(x, c);
            let h = self.tape.layer_norm(x, layer.norm3.gamma, layer.norm3.beta);
            let f = self.feed_forward(&layer.ffn, h);
            x = self.residual(x, f);
        }
        self.tape.layer_norm(x, layout.decoder_norm.gamma, layout.decoder_norm.beta)
    }
}

fn validate_pair<T>(params: &Params<T>, pair: &CorruptedPair) -> Result<(), ModelError> {
    check_ids(params, &pair.input)?;
    check_ids(params, &pair.target)?;
    if pair.target.len() < 2 {
        return Err(ModelError::TargetTooShort(pair.target.len()));
    }
    Ok(())
}

/// Builds the teacher-forced graph for `pairs` and returns the tape, the
/// loss node (`scale · Σ NLL` over every target token after `<bos>`), and
/// batch statistics.
pub fn batch_loss<'p, T: Scalar>(
    params: &'p Params<T>,
    pairs: &[CorruptedPair],
    scale: T,
    dropout: Dropout<'_>,
) -> Result<(Tape<'p, T>, NodeId, BatchStats), ModelError> {
    for pair in pairs {
        validate_pair(params, pair)?;
    }
    let inputs: Vec<&[u32]> = pairs.iter().map(|p| p.input.as_slice()).collect();
    let dec_inputs: Vec<&[u32]> = pairs.iter().map(|p| &p.target[..p.target.len() - 1]).collect();
    let src = pack(&inputs);
    let dec = pack(&dec_inputs);
    let targets: Vec<u32> = pairs.iter().flat_map(|p| p.target[1..].iter().copied()).collect();

    let mut tape = Tape::new(params);
    let mut ctx = Ctx {
        tape: &mut tape,
        rate: params.config.dropout,
        rng: dropout,
        heads: params.config.n_heads,
    };
    let enc = ctx.encoder(&src, None);
    let out = ctx.decoder(&dec, enc, &src, None);
    let (loss, rows) = tape.tied_loss(out, params.layout.token_embedding, &targets, scale);

    let mut stats = BatchStats {
        nll_sum: rows.nll.iter().map(|v| v.to_f64().unwrap()).sum(),
        tokens: targets.len(),
        ..BatchStats::default()
    };
    for (i, pair) in pairs.iter().enumerate() {
        for &m in &pair.mask_positions {
            if m == 0 || m >= pair.target.len() {
                continue;
            }
            let row = dec.starts[i] + m - 1;
            stats.masked += 1;
            stats.masked_correct += usize::from(rows.argmax[row] == pair.target[m]);
        }
    }
    Ok((tape, loss, stats))
}

/// Gradients of `(Σ NLL) / normalizer` over `pairs`.
pub fn loss_and_gradients<T: Scalar>(
    params: &Params<T>,
    pairs: &[CorruptedPair],
    normalizer: usize,
    dropout: Dropout<'_>,
) -> Result<(BatchStats, Gradients<T>), ModelError> {
    let scale = T::one() / T::of(normalizer.max(1) as f64);
    let (tape, loss, stats) = batch_loss(params, pairs, scale, dropout)?;
    let mut grads = Gradients::zeros_like(params);
    tape.backward(loss, &mut grads);
    Ok((stats, grads))
}

/// Mean negative log-likelihood over all target tokens of one pair, with
/// gradients for every parameter. Dropout is off.
pub fn denoise_loss<T: Scalar>(params: &Params<T>, pair: &CorruptedPair) -> Result<(T, Gradients<T>), ModelError> {
    validate_pair(params, pair)?;
    let n = pair.target.len() - 1;
    let scale = T::one() / T::of(n as f64);
    let (tape, loss, _) = batch_loss(params, std::slice::from_ref(pair), scale, None)?;
    let value = tape.value(loss).data[0];
    let mut grads = Gradients::zeros_like(params);
    tape.backward(loss, &mut grads);
    Ok((value, grads))
}

/// Loss statistics without gradients or dropout.
pub fn evaluate<T: Scalar>(params: &Params<T>, pairs: &[CorruptedPair]) -> Result<BatchStats, ModelError> {
    batch_loss(params, pairs, T::one(), None).map(|(_, _, stats)| stats)
}

/// Final encoder states (L × d_model). Positions flagged in `pad` are never
/// attended to; their own output rows are computed but carry no meaning.
pub fn encode_seq<T: Scalar>(params: &Params<T>, ids: &[u32], pad: &[bool]) -> Result<Matrix<T>, ModelError> {
    check_ids(params, ids)?;
    assert_eq!(ids.len(), pad.len(), "pad mask length must match the sequence");
    let valid: Vec<bool> = pad.iter().map(|&p| !p).collect();
    let src = pack(&[ids]);
    let mut tape = Tape::new(params);
    let mut ctx = Ctx {
        tape: &mut tape,
        rate: 0.0,
        rng: None,
        heads: params.config.n_heads,
    };
    let enc = ctx.encoder(&src, Some(&valid));
    Ok(tape.value(enc).clone())
}

fn tied_logits<T: Scalar>(params: &Params<T>, hidden: &Matrix<T>) -> Matrix<T> {
    let e = params.get(params.layout.token_embedding);
    let mut logits = Matrix::zeros(hidden.rows, e.rows);
    gemm(
        hidden.rows,
        hidden.cols,
        e.rows,
        View::rows(&hidden.data, hidden.cols),
        View::transposed(&e.data, e.cols),
        T::zero(),
        &mut logits.data,
        e.rows,
    );
    logits
}

/// Next-token logits for every prefix of `dec_input` at once (row t sees
/// `dec_input[..=t]`).
pub fn decoder_logits<T: Scalar>(
    params: &Params<T>,
    enc_states: &Matrix<T>,
    dec_input: &[u32],
) -> Result<Matrix<T>, ModelError> {
    if dec_input.is_empty() {
        return Err(ModelError::EmptyPrefix);
    }
    check_ids(params, dec_input)?;
    let d = params.config.d_model;
    assert_eq!(enc_states.cols, d, "encoder states must have d_model columns");
    let src = Packed {
        ids: Vec::new(),
        positions: Vec::new(),
        starts: vec![0],
        lens: vec![enc_states.rows],
    };
    let dec = pack(&[dec_input]);
    let mut tape = Tape::new(params);
    let enc = tape.input(enc_states.clone());
    let mut ctx = Ctx {
        tape: &mut tape,
        rate: 0.0,
        rng: None,
        heads: params.config.n_heads,
    };
    let out = ctx.decoder(&dec, enc, &src, None);
    Ok(tied_logits(params, tape.value(out)))
}

/// Logits for the token following `prefix`, which must start with `<bos>`.
pub fn decode_step<T: Scalar>(params: &Params<T>, enc_states: &Matrix<T>, prefix: &[u32]) -> Result<Vec<T>, ModelError> {
    match prefix.first() {
        None => return Err(ModelError::EmptyPrefix),
        Some(&first) if first != BOS => return Err(ModelError::MissingBos),
        _ => {}
    }
    let logits = decoder_logits(params, enc_states, prefix)?;
    Ok(logits.row(logits.rows - 1).to_vec())
}

/// Mean of the final encoder states over content positions.
pub fn embed<T: Scalar>(params: &Params<T>, ids: &[u32]) -> Result<Vec<T>, ModelError> {
    let content: Vec<usize> = (0..ids.len()).filter(|&i| is_content(ids[i])).collect();
    if content.is_empty() {
        return Err(ModelError::NoContent);
    }
    let states = encode_seq(params, ids, &vec![false; ids.len()])?;
    let mut out = vec![T::zero(); states.cols];
    for &i in &content {
        for (o, &v) in out.iter_mut().zip(states.row(i)) {
            *o += v;
        }
    }
    let n = T::of(content.len() as f64);
    for o in &mut out {
        *o /= n;
    }
    Ok(out)
}

/// Draws a fresh dropout stream; kept here so training and tests agree on
/// the generator type.
pub fn dropout_rng<R: Rng + ?Sized>(rng: &mut R) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(rng.random())
}
