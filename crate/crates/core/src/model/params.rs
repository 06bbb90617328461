//! Parameter layout, initialization and gradient buffers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use super::scalar::Scalar;
use super::tensor::Matrix;
use super::ModelError;

pub type ParamId = usize;

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct Attention {
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct FeedForward {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderLayer {
    pub norm1: Norm,
    pub attn: Attention,
    pub norm2: Norm,
    pub ffn: FeedForward,
}

#[derive(Debug, Clone, Copy)]
pub struct DecoderLayer {
    pub norm1: Norm,
    pub self_attn: Attention,
    pub norm2: Norm,
    pub cross_attn: Attention,
    pub norm3: Norm,
    pub ffn: FeedForward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

#[derive(Debug, Clone)]
struct Spec {
    name: String,
    rows: usize,
    cols: usize,
    init: Init,
}

/// Where each named tensor lives in the flat parameter list.
#[derive(Debug, Clone)]
pub struct Layout {
    pub token_embedding: ParamId,
    pub encoder_positions: ParamId,
    pub decoder_positions: ParamId,
    pub encoder: Vec<EncoderLayer>,
    pub decoder: Vec<DecoderLayer>,
    pub encoder_norm: Norm,
    pub decoder_norm: Norm,
    specs: Vec<Spec>,
}

struct Builder {
    specs: Vec<Spec>,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> ParamId {
        self.specs.push(Spec { name, rows, cols, init });
        self.specs.len() - 1
    }

    fn norm(&mut self, prefix: &str, d: usize) -> Norm {
        Norm {
            gamma: self.add(format!("{prefix}.gamma"), 1, d, Init::Ones),
            beta: self.add(format!("{prefix}.beta"), 1, d, Init::Zeros),
        }
    }

    fn attention(&mut self, prefix: &str, d: usize) -> Attention {
        let mut pair = |name: &str| {
            (
                self.add(format!("{prefix}.w{name}"), d, d, Init::Normal),
                self.add(format!("{prefix}.b{name}"), 1, d, Init::Zeros),
            )
        };
        let (wq, bq) = pair("q");
        let (wk, bk) = pair("k");
        let (wv, bv) = pair("v");
        let (wo, bo) = pair("o");
        Attention {
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
        }
    }

    fn feed_forward(&mut self, prefix: &str, d: usize, ff: usize) -> FeedForward {
        FeedForward {
            w1: self.add(format!("{prefix}.w1"), d, ff, Init::Normal),
            b1: self.add(format!("{prefix}.b1"), 1, ff, Init::Zeros),
            w2: self.add(format!("{prefix}.w2"), ff, d, Init::Normal),
            b2: self.add(format!("{prefix}.b2"), 1, d, Init::Zeros),
        }
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Layout {
        let d = cfg.d_model;
        let mut b = Builder { specs: Vec::new() };
        let token_embedding = b.add("embed.tokens".into(), cfg.vocab_size, d, Init::Normal);
        let encoder_positions = b.add("encoder.positions".into(), cfg.max_len, d, Init::Normal);
        let decoder_positions = b.add("decoder.positions".into(), cfg.max_len, d, Init::Normal);
        let encoder = (0..cfg.encoder_layers)
            .map(|i| {
                let p = format!("encoder.{i}");
                EncoderLayer {
                    norm1: b.norm(&format!("{p}.norm1"), d),
                    attn: b.attention(&format!("{p}.attn"), d),
                    norm2: b.norm(&format!("{p}.norm2"), d),
                    ffn: b.feed_forward(&format!("{p}.ffn"), d, cfg.ff_dim),
                }
            })
            .collect();
        let decoder = (0..cfg.decoder_layers)
            .map(|i| {
                let p = format!("decoder.{i}");
                DecoderLayer {
                    norm1: b.norm(&format!("{p}.norm1"), d),
                    self_attn: b.attention(&format!("{p}.self_attn"), d),
                    norm2: b.norm(&format!("{p}.norm2"), d),
                    cross_attn: b.attention(&format!("{p}.cross_attn"), d),
                    norm3: b.norm(&format!("{p}.norm3"), d),
                    ffn: b.feed_forward(&format!("{p}.ffn"), d, cfg.ff_dim),
                }
            })
            .collect();
        let encoder_norm = b.norm("encoder.norm", d);
        let decoder_norm = b.norm("decoder.norm", d);
        Layout {
            token_embedding,
            encoder_positions,
            decoder_positions,
            encoder,
            decoder,
            encoder_norm,
            decoder_norm,
            specs: b.specs,
        }
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.specs[id].name
    }

    pub fn shape(&self, id: ParamId) -> (usize, usize) {
        (self.specs[id].rows, self.specs[id].cols)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.specs.iter().position(|s| s.name == name)
    }
}

/// All model weights. The token embedding doubles as the output projection.
#[derive(Debug, Clone)]
pub struct Params<T> {
    pub config: ModelConfig,
    pub layout: Layout,
    pub tensors: Vec<Matrix<T>>,
}

impl<T: Scalar> Params<T> {
    /// Normal(0, 0.02) weights and embeddings, zero biases, unit layer-norm
    /// gains. Values are drawn in f64 so both precisions see the same numbers.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let tensors = layout
            .specs
            .iter()
            .map(|s| {
                let data = (0..s.rows * s.cols)
                    .map(|_| match s.init {
                        Init::Normal => T::of(normal.sample(&mut rng)),
                        Init::Zeros => T::zero(),
                        Init::Ones => T::one(),
                    })
                    .collect();
                Matrix::from_vec(s.rows, s.cols, data)
            })
            .collect();
        Ok(Params {
            config: config.clone(),
            layout,
            tensors,
        })
    }

    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Matrix<T>>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(config);
        if tensors.len() != layout.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} tensors, found {}",
                layout.len(),
                tensors.len()
            )));
        }
        for (id, t) in tensors.iter().enumerate() {
            if (t.rows, t.cols) != layout.shape(id) {
                return Err(ModelError::Checkpoint(format!(
                    "tensor {} has shape {}x{}, expected {:?}",
                    layout.name(id),
                    t.rows,
                    t.cols,
                    layout.shape(id)
                )));
            }
        }
        Ok(Params {
            config: config.clone(),
            layout,
            tensors,
        })
    }

    pub fn get(&self, id: ParamId) -> &Matrix<T> {
        &self.tensors[id]
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            config: self.config.clone(),
            layout: self.layout.clone(),
            tensors: self.tensors.iter().map(Matrix::cast).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

/// One gradient tensor per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Matrix<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(params: &Params<T>) -> Self {
        Gradients {
            tensors: params.tensors.iter().map(|t| Matrix::zeros(t.rows, t.cols)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in &mut self.tensors {
            for v in &mut t.data {
                *v *= factor;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| &t.data)
            .map(|v| {
                let v = v.to_f64().unwrap();
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_gives_identical_parameters() {
        let cfg = ModelConfig {
            d_model: 16,
            n_heads: 2,
            ff_dim: 32,
            max_len: 10,
            ..ModelConfig::desk(20)
        };
        let a = Params::<f32>::init(&cfg, 9).unwrap();
        let b = Params::<f32>::init(&cfg, 9).unwrap();
        let c = Params::<f32>::init(&cfg, 10).unwrap();
        assert_eq!(a.tensors, b.tensors);
        assert_ne!(a.tensors, c.tensors);
    }

    #[test]
    fn names_are_unique() {
        let layout = Layout::new(&ModelConfig::desk(40));
        let names: std::collections::BTreeSet<_> = (0..layout.len()).map(|i| layout.name(i)).collect();
        assert_eq!(names.len(), layout.len());
        assert_eq!(layout.find("decoder.1.cross_attn.wv").map(|id| layout.shape(id)), Some((128, 128)));
    }
}
