//! Binary checkpoint: an 8-byte magic, a little-endian `u32` header length,
//! a JSON header (format version, dtype, configs, vocabulary, bounds, and
//! parameter names with shapes), then every parameter value in header order
//! as little-endian floats.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, TrainConfig};
use super::encoding::NormBounds;
use super::net::Model;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"SCNSEQCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dtype: String,
    config: ModelConfig,
    train_config: Option<TrainConfig>,
    vocab: Vec<String>,
    bounds: NormBounds,
    params: Vec<ParamMeta>,
}

impl<T: Scalar> Model<T> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: FORMAT_VERSION,
            dtype: T::DTYPE.to_string(),
            config: self.config.clone(),
            train_config: self.train_config.clone(),
            vocab: self.vocab.clone(),
            bounds: self.bounds.clone(),
            params: self
                .params()
                .iter()
                .map(|(name, t)| ParamMeta {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + self.params().num_scalars() * T::BYTES);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in self.params().iter() {
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        Ok(out)
    }

    /// Loads a checkpoint of either dtype, converting values to `T`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint (bad magic)".into()));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let json = bytes.get(12..12 + len).ok_or_else(|| bad("truncated header".into()))?;
        let header: Header = serde_json::from_slice(json)?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {}", header.format_version)));
        }
        let (width, read): (usize, fn(&[u8]) -> f64) = match header.dtype.as_str() {
            "f64" => (8, |b| f64::read_le(b)),
            "f32" => (4, |b| f32::read_le(b) as f64),
            other => return Err(bad(format!("unknown dtype {other}"))),
        };
        let mut model = Model::<T>::new(header.config, header.vocab, header.bounds, 0)?;
        model.train_config = header.train_config;
        let store = model.params_mut();
        if header.params.len() != store.len() {
            return Err(bad(format!(
                "{} parameters in file, model expects {}",
                header.params.len(),
                store.len()
            )));
        }
        let mut offset = 12 + len;
        for meta in &header.params {
            let id = store
                .id(&meta.name)
                .ok_or_else(|| bad(format!("unexpected parameter {}", meta.name)))?;
            let t = store.get_mut(id);
            if t.shape() != meta.shape.as_slice() {
                return Err(bad(format!("shape of {} is {:?}, expected {:?}", meta.name, meta.shape, t.shape())));
            }
            let n = t.len();
            let raw = bytes
                .get(offset..offset + n * width)
                .ok_or_else(|| bad(format!("truncated values for {}", meta.name)))?;
            for (dst, chunk) in t.data_mut().iter_mut().zip(raw.chunks_exact(width)) {
                *dst = T::lit(read(chunk));
            }
            offset += n * width;
        }
        if offset != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - offset)));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
