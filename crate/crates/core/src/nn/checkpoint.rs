//! `HSCK` checkpoint files: magic, u32 version, u32 header length, JSON
//! header, then every tensor as little-endian f32 in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Classifier, ModelSpec};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub spec: ModelSpec,
    pub tensors: Vec<TensorEntry>,
    pub config: serde_json::Value,
    pub epoch: usize,
    pub validation_metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Classifier<f32>,
    pub config: serde_json::Value,
    pub epoch: usize,
    pub validation_metric: f64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let named = self.model.named_tensors();
        let header = CheckpointHeader {
            spec: self.model.spec().clone(),
            tensors: named
                .iter()
                .map(|(name, t)| TensorEntry { name: name.clone(), shape: t.shape().to_vec() })
                .collect(),
            config: self.config.clone(),
            epoch: self.epoch,
            validation_metric: self.validation_metric,
        };
        let json = serde_json::to_vec(&header)?;
        let payload: usize = named.iter().map(|(_, t)| t.len()).sum();
        let mut out = Vec::with_capacity(12 + json.len() + 4 * payload);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in named {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: &str| Error::Format(format!("checkpoint: {m}"));
        if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(fmt("bad magic"));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = word(4);
        if version != CHECKPOINT_VERSION {
            return Err(fmt(&format!("unsupported version {version}")));
        }
        let header_len = word(8) as usize;
        let json = bytes.get(12..12 + header_len).ok_or_else(|| fmt("truncated header"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(json).map_err(|e| fmt(&format!("header: {e}")))?;

        // Any deterministic seed works; every tensor is overwritten below.
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut model = Classifier::<f32>::new(header.spec.clone(), &mut rng)
            .map_err(|e| fmt(&e.to_string()))?;
        let mut payload = &bytes[12 + header_len..];
        {
            let targets = model.named_tensors_mut();
            if targets.len() != header.tensors.len() {
                return Err(fmt("tensor list does not match the model spec"));
            }
            for ((name, t), entry) in targets.into_iter().zip(&header.tensors) {
                if name != entry.name || t.shape() != entry.shape.as_slice() {
                    return Err(fmt(&format!(
                        "tensor {} {:?} where the model has {name} {:?}",
                        entry.name,
                        entry.shape,
                        t.shape()
                    )));
                }
                let n = t.len() * 4;
                if payload.len() < n {
                    return Err(fmt("truncated payload"));
                }
                for (v, b) in t.data_mut().iter_mut().zip(payload[..n].chunks_exact(4)) {
                    *v = f32::from_le_bytes(b.try_into().unwrap());
                }
                payload = &payload[n..];
            }
        }
        if !payload.is_empty() {
            return Err(fmt("trailing bytes after payload"));
        }
        if model.named_tensors().iter().any(|(_, t)| !t.is_finite()) {
            return Err(fmt("non-finite parameter"));
        }
        if model.head.bn_running_var.data().iter().any(|&v| v <= 0.0) {
            return Err(fmt("running variance must be positive"));
        }
        Ok(Self {
            model,
            config: header.config,
            epoch: header.epoch,
            validation_metric: header.validation_metric,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut model = Classifier::<f32>::new(ModelSpec { input_dim: 6, hidden: vec![4] }, &mut rng).unwrap();
        model.head.bn_running_mean.data_mut()[1] = 0.25;
        Checkpoint {
            model,
            config: serde_json::json!({"base_lr": 0.001}),
            epoch: 7,
            validation_metric: 0.875,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"HSCK");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = sample().to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format(_))));
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
        let mut ver = bytes;
        ver[4] = 9;
        assert!(Checkpoint::from_bytes(&ver).is_err());
    }
}
