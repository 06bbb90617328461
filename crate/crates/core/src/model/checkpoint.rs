//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//! magic `SBARTCKP`, format version u32, config text (u32 length + UTF-8
//! `key=value` lines), training step u64, tensor count u32, then per
//! tensor: name (u32 length + UTF-8), rank u32, dims u32 each, values as f32. Optimizer moments, when present, are stored as tensors
//! named `adam.m.<name>` and `adam.v.<name>`.

use std::io::{Read, Write};

use super::config::ModelConfig;
use super::optim::AdamState;
use super::params::Params;
use super::scalar::Scalar;
use super::tensor::Matrix;
use super::ModelError;

pub const MAGIC: &[u8; 8] = b"SBARTCKP";
pub const VERSION: u32 = 1;

const MAX_NAME: usize = 4096;

/// Model weights plus optional optimizer state.
#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub params: Params<T>,
    pub adam: Option<AdamState<T>>,
    pub step: usize,
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn put_tensor<W: Write, T: Scalar>(w: &mut W, name: &str, t: &Matrix<T>) -> std::io::Result<()> {
    put_str(w, name)?;
    put_u32(w, 2)?;
    put_u32(w, t.rows as u32)?;
    put_u32(w, t.cols as u32)?;
    let mut buf = Vec::with_capacity(t.data.len() * 4);
    for v in &t.data {
        buf.extend_from_slice(&v.to_f32().unwrap().to_le_bytes());
    }
    w.write_all(&buf)
}

impl<T: Scalar> Checkpoint<T> {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        let layout = &self.params.layout;
        w.write_all(MAGIC)?;
        put_u32(&mut w, VERSION)?;
        put_str(&mut w, &self.params.config.to_text())?;
        w.write_all(&(self.step as u64).to_le_bytes())?;
        let n = layout.len() * if self.adam.is_some() { 3 } else { 1 };
        put_u32(&mut w, n as u32)?;
        for (id, t) in self.params.tensors.iter().enumerate() {
            put_tensor(&mut w, layout.name(id), t)?;
        }
        if let Some(adam) = &self.adam {
            for (id, t) in adam.m.iter().enumerate() {
                put_tensor(&mut w, &format!("adam.m.{}", layout.name(id)), t)?;
            }
            for (id, t) in adam.v.iter().enumerate() {
                put_tensor(&mut w, &format!("adam.v.{}", layout.name(id)), t)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ModelError> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, ModelError> {
        Self::parse(r).map_err(|e| match e {
            ModelError::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                ModelError::Checkpoint("file is truncated".into())
            }
            other => other,
        })
    }

    fn parse<R: Read>(mut r: R) -> Result<Self, ModelError> {
        let bad = |msg: &str| ModelError::Checkpoint(msg.to_owned());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = get_u32(&mut r)?;
        if version != VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported format version {version}")));
        }
        let config = ModelConfig::from_text(&get_str(&mut r, 1 << 16)?)?;
        let step = u64::from_le_bytes(get_array(&mut r)?) as usize;
        let count = get_u32(&mut r)? as usize;
        let layout = super::params::Layout::new(&config);
        let mut slots: Vec<Option<Matrix<T>>> = (0..3 * layout.len()).map(|_| None).collect();
        for _ in 0..count {
            let name = get_str(&mut r, MAX_NAME)?;
            let rank = get_u32(&mut r)?;
            if rank != 2 {
                return Err(ModelError::Checkpoint(format!("tensor {name} has rank {rank}")));
            }
            let rows = get_u32(&mut r)? as usize;
            let cols = get_u32(&mut r)? as usize;
            let (slot, base) = if let Some(rest) = name.strip_prefix("adam.m.") {
                (1, rest)
            } else if let Some(rest) = name.strip_prefix("adam.v.") {
                (2, rest)
            } else {
                (0, name.as_str())
            };
            let id = layout
                .find(base)
                .ok_or_else(|| ModelError::Checkpoint(format!("unknown tensor {name}")))?;
            if layout.shape(id) != (rows, cols) {
                return Err(ModelError::Checkpoint(format!("tensor {name} has shape {rows}x{cols}")));
            }
            let mut buf = vec![0u8; rows * cols * 4];
            r.read_exact(&mut buf)?;
            let data = buf
                .chunks_exact(4)
                .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
                .collect();
            let index = slot * layout.len() + id;
            if slots[index].replace(Matrix::from_vec(rows, cols, data)).is_some() {
                return Err(ModelError::Checkpoint(format!("duplicate tensor {name}")));
            }
        }
        let mut groups = slots.chunks_mut(layout.len()).map(|group| {
            group
                .iter_mut()
                .map(Option::take)
                .collect::<Option<Vec<_>>>()
                .ok_or(())
        });
        let weights = groups
            .next()
            .unwrap()
            .map_err(|_| bad("checkpoint is missing model tensors"))?;
        let m = groups.next().unwrap();
        let v = groups.next().unwrap();
        let adam = match (m, v) {
            (Ok(m), Ok(v)) => Some(AdamState { step, m, v }),
            _ if count == layout.len() => None,
            _ => return Err(bad("checkpoint has incomplete optimizer state")),
        };
        let params = Params::from_tensors(&config, weights)?;
        if !params.all_finite() {
            return Err(bad("checkpoint contains non-finite weights"));
        }
        Ok(Checkpoint {
            params,
            adam,
            step,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ModelError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn get_array<R: Read, const N: usize>(r: &mut R) -> std::io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn get_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    Ok(u32::from_le_bytes(get_array(r)?))
}

fn get_str<R: Read>(r: &mut R, max: usize) -> Result<String, ModelError> {
    let n = get_u32(r)? as usize;
    if n > max {
        return Err(ModelError::Checkpoint(format!("string of length {n} is too long")));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| ModelError::Checkpoint("string is not UTF-8".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ModelConfig {
        ModelConfig {
            d_model: 8,
            n_heads: 2,
            ff_dim: 16,
            max_len: 6,
            encoder_layers: 1,
            decoder_layers: 1,
            ..ModelConfig::desk(9)
        }
    }

    #[test]
    fn round_trip_with_and_without_optimizer_state() {
        let params = Params::<f32>::init(&toy(), 3).unwrap();
        let mut adam = AdamState::new(&params);
        adam.step = 7;
        adam.m[2].data[1] = 0.5;
        let ck = Checkpoint {
            params: params.clone(),
            adam: Some(adam.clone()),
            step: 7,
        };
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let back = Checkpoint::<f32>::read_from(&buf[..]).unwrap();
        assert_eq!(back.params.tensors, params.tensors);
        assert_eq!(back.adam, Some(adam));
        assert_eq!(back.step, 7);

        let plain = Checkpoint {
            adam: None,
            ..ck
        };
        let mut buf = Vec::new();
        plain.write_to(&mut buf).unwrap();
        assert!(Checkpoint::<f32>::read_from(&buf[..]).unwrap().adam.is_none());
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(matches!(
            Checkpoint::<f32>::read_from(&b"NOTACKPT...."[..]),
            Err(ModelError::Checkpoint(_))
        ));
        let params = Params::<f32>::init(&toy(), 3).unwrap();
        let ck = Checkpoint {
            params,
            adam: None,
            step: 0,
        };
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(
            Checkpoint::<f32>::read_from(&buf[..]),
            Err(ModelError::Checkpoint(_))
        ));
    }
}
