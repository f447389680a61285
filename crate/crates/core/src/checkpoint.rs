//! Binary parameter container.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header (model kind, config, vocabulary hash, free-form metadata, tensor
//! index) and then every tensor as little-endian `f64`, in index order.
//! Loading a saved model reproduces its parameters bit for bit.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::params::Parameterized;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CRISCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: String,
    config: serde_json::Value,
    vocab_hash: Option<String>,
    #[serde(default)]
    metadata: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config: serde_json::Value,
    pub vocab_hash: Option<String>,
    pub metadata: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
    pub data: Vec<f64>,
}

impl Checkpoint {
    pub fn from_model<P, C>(kind: &str, config: &C, vocab_hash: Option<String>, model: &P) -> Result<Self>
    where
        P: Parameterized + ?Sized,
        C: Serialize,
    {
        let mut tensors = Vec::new();
        model.visit(&mut |p| {
            tensors.push(TensorEntry {
                name: p.name,
                shape: p.shape,
            })
        });
        Ok(Self {
            kind: kind.to_string(),
            config: serde_json::to_value(config).map_err(|e| Error::Checkpoint(e.to_string()))?,
            vocab_hash,
            metadata: serde_json::Value::Null,
            tensors,
            data: model.flatten(),
        })
    }

    pub fn with_metadata(mut self, metadata: serde_json::Value) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn config_as<C: DeserializeOwned>(&self) -> Result<C> {
        serde_json::from_value(self.config.clone()).map_err(|e| Error::Checkpoint(format!("config: {e}")))
    }

    /// Copies the stored tensors into `model`, which must have the same
    /// tensor names and shapes in the same order.
    pub fn load_into<P: Parameterized + ?Sized>(&self, model: &mut P) -> Result<()> {
        let mut expected = Vec::new();
        model.visit(&mut |p| {
            expected.push(TensorEntry {
                name: p.name,
                shape: p.shape,
            })
        });
        if expected.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors stored, model has {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        for (e, s) in expected.iter().zip(&self.tensors) {
            if e != s {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match model tensor {} {:?}",
                    s.name, s.shape, e.name, e.shape
                )));
            }
        }
        model.assign_flat(&self.data)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind.clone(),
            config: self.config.clone(),
            vocab_hash: self.vocab_hash.clone(),
            metadata: self.metadata.clone(),
            tensors: self.tensors.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut out = Vec::with_capacity(20 + json.len() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(err("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() < header_len {
            return Err(err("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&body[..header_len]).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let raw = &body[header_len..];
        let expected: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
        if raw.len() != expected * 8 {
            return Err(Error::Checkpoint(format!(
                "{} data bytes for {expected} values",
                raw.len()
            )));
        }
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self {
            kind: header.kind,
            config: header.config,
            vocab_hash: header.vocab_hash,
            metadata: header.metadata,
            tensors: header.tensors,
            data,
        })
    }

    /// Writes to a sibling temporary file, then renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// SHA-256 of the serialized container.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{EncoderConfig, EncoderModel};
    use crate::heads::SequenceClassifier;
    use crate::params::checksum;

    fn small() -> EncoderConfig {
        EncoderConfig {
            num_layers: 1,
            hidden_dim: 8,
            num_heads: 2,
            ffn_dim: 16,
            max_positions: 10,
            vocab_size: 20,
            dropout_rate: 0.1,
            seed: 3,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let model = SequenceClassifier::init(&small(), 3).unwrap();
        let ck = Checkpoint::from_model("classifier", &small(), Some("h".into()), &model)
            .unwrap()
            .with_metadata(serde_json::json!({"task": "recognition"}));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        let cfg: EncoderConfig = back.config_as().unwrap();
        let mut fresh = SequenceClassifier::init(&EncoderConfig { seed: 99, ..cfg }, 3).unwrap();
        back.load_into(&mut fresh).unwrap();
        assert_eq!(checksum(&fresh), checksum(&model));
        let bits = |m: &SequenceClassifier| m.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&fresh), bits(&model));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let model = EncoderModel::init(&small()).unwrap();
        let ck = Checkpoint::from_model("encoder", &small(), None, &model).unwrap();
        let mut other = EncoderModel::init(&EncoderConfig {
            hidden_dim: 12,
            ..small()
        })
        .unwrap();
        assert!(ck.load_into(&mut other).is_err());
    }

    #[test]
    fn corrupt_bytes_rejected() {
        let model = EncoderModel::init(&small()).unwrap();
        let bytes = Checkpoint::from_model("encoder", &small(), None, &model)
            .unwrap()
            .to_bytes()
            .unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut newer = bytes;
        newer[8] = 9;
        assert!(Checkpoint::from_bytes(&newer).unwrap_err().to_string().contains("version"));
    }
}
