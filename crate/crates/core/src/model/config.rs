use std::fmt::Write as _;

use super::ModelError;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// Default size for single-CPU training: d_model 128, 4 heads, 2 + 2
    /// layers, feed-forward width 512, sequences up to 128 ids.
    pub fn desk(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            d_model: 128,
            n_heads: 4,
            encoder_layers: 2,
            decoder_layers: 2,
            ff_dim: 512,
            max_len: 128,
            dropout: 0.1,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::InvalidConfig(msg));
        for (name, value) in [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("ff_dim", self.ff_dim),
        ] {
            if value == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 {
            return fail("encoder_layers and decoder_layers must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return fail(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.max_len < 3 {
            return fail(format!("max_len {} is below 3", self.max_len));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} is outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// `key=value` lines, one per field.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            writeln!(s, "{k}={v}").unwrap();
        }
        s
    }

    fn entries(&self) -> [(&'static str, String); 8] {
        [
            ("vocab_size", self.vocab_size.to_string()),
            ("d_model", self.d_model.to_string()),
            ("n_heads", self.n_heads.to_string()),
            ("encoder_layers", self.encoder_layers.to_string()),
            ("decoder_layers", self.decoder_layers.to_string()),
            ("ff_dim", self.ff_dim.to_string()),
            ("max_len", self.max_len.to_string()),
            ("dropout", self.dropout.to_string()),
        ]
    }

    /// Parses the output of [`ModelConfig::to_text`]; unknown keys are errors.
    pub fn from_text(text: &str) -> Result<Self, ModelError> {
        let mut cfg = ModelConfig::desk(0);
        let mut seen = std::collections::BTreeSet::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ModelError::InvalidConfig(format!("malformed line {line:?}")))?;
            let bad = || ModelError::InvalidConfig(format!("bad value for {key}: {value:?}"));
            let int = || value.parse::<usize>().map_err(|_| bad());
            match key {
                "vocab_size" => cfg.vocab_size = int()?,
                "d_model" => cfg.d_model = int()?,
                "n_heads" => cfg.n_heads = int()?,
                "encoder_layers" => cfg.encoder_layers = int()?,
                "decoder_layers" => cfg.decoder_layers = int()?,
                "ff_dim" => cfg.ff_dim = int()?,
                "max_len" => cfg.max_len = int()?,
                "dropout" => cfg.dropout = value.parse().map_err(|_| bad())?,
                _ => return Err(ModelError::InvalidConfig(format!("unknown key {key}"))),
            }
            seen.insert(key.to_owned());
        }
        if seen.len() != 8 {
            return Err(ModelError::InvalidConfig("model config is missing fields".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
