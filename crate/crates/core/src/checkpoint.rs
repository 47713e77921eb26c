//! Self-describing binary container for model parameters.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "DSALMCKP"
//! version  u32
//! seed     u64
//! n_hyper  u32, then n_hyper × (key: str, value: str)
//! vocab    str      content hash of the vocabulary the model was trained with
//! n_tensor u32, then n_tensor × (name: str, ndim: u32, dims: ndim × u64, values: f64 × Π dims)
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8 bytes.

use std::collections::BTreeMap;
use std::path::Path;

use crate::autodiff::{ParameterStore, Tensor};
use crate::error::{Error, Result};
use crate::fsutil::{self, put_f64s, put_str, put_u32, put_u64, ByteReader};

const MAGIC: &[u8; 8] = b"DSALMCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub hyper: BTreeMap<String, String>,
    pub vocab_hash: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_store(store: &ParameterStore, seed: u64, hyper: BTreeMap<String, String>, vocab_hash: &str) -> Self {
        Self {
            seed,
            hyper,
            vocab_hash: vocab_hash.to_string(),
            tensors: store.named_tensors().map(|(n, t)| (n.to_string(), t.clone())).collect(),
        }
    }

    pub fn hyper(&self, key: &str) -> Result<&str> {
        self.hyper
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::module("checkpoint", format!("missing hyperparameter {key:?}")))
    }

    pub fn hyper_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.hyper(key)?;
        raw.parse()
            .map_err(|_| Error::module("checkpoint", format!("bad value {raw:?} for {key:?}")))
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        put_u64(&mut out, self.seed);
        put_u32(&mut out, self.hyper.len() as u32);
        for (k, v) in &self.hyper {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        put_str(&mut out, &self.vocab_hash);
        put_u32(&mut out, self.tensors.len() as u32);
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            put_u32(&mut out, t.shape().len() as u32);
            for &d in t.shape() {
                put_u64(&mut out, d as u64);
            }
            put_f64s(&mut out, t.data());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "checkpoint");
        if r.take(8)? != MAGIC {
            return Err(Error::module("checkpoint", "bad magic; not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::module(
                "checkpoint",
                format!("unsupported format version {version}"),
            ));
        }
        let seed = r.u64()?;
        let n_hyper = r.u32()?;
        let mut hyper = BTreeMap::new();
        for _ in 0..n_hyper {
            let k = r.string()?;
            let v = r.string()?;
            hyper.insert(k, v);
        }
        let vocab_hash = r.string()?;
        let n = r.u32()?;
        let mut tensors = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let count = shape.iter().product();
            let data = r.f64s(count)?;
            let t =
                Tensor::new(shape, data).map_err(|e| Error::module("checkpoint", format!("tensor {name:?}: {e}")))?;
            tensors.push((name, t));
        }
        if !r.finished() {
            return Err(Error::module("checkpoint", "trailing bytes after last tensor"));
        }
        Ok(Self {
            seed,
            hyper,
            vocab_hash,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fsutil::read(path)?)
    }

    /// Fails unless the checkpoint was trained against `vocab_hash`.
    pub fn require_vocab(&self, vocab_hash: &str) -> Result<()> {
        if self.vocab_hash != vocab_hash {
            return Err(Error::module(
                "checkpoint",
                format!(
                    "vocabulary mismatch: checkpoint {} vs supplied {}",
                    self.vocab_hash, vocab_hash
                ),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            seed in any::<u64>(),
            values in prop::collection::vec(any::<f64>(), 1..40),
            key in "[a-z.]{1,12}",
            val in "[ -~]{0,20}",
        ) {
            let mut hyper = BTreeMap::new();
            hyper.insert(key, val);
            let n = values.len();
            let ck = Checkpoint {
                seed,
                hyper,
                vocab_hash: "abc123".into(),
                tensors: vec![
                    ("a".into(), Tensor::vector(values.clone())),
                    ("b.w".into(), Tensor::new(vec![1, n], values).unwrap()),
                ],
            };
            let bytes = ck.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            for ((_, x), (_, y)) in back.tensors.iter().zip(&ck.tensors) {
                let xb: Vec<u64> = x.data().iter().map(|v| v.to_bits()).collect();
                let yb: Vec<u64> = y.data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(xb, yb);
            }
        }
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        assert!(Checkpoint::from_bytes(b"nope").is_err());
        let ck = Checkpoint {
            seed: 1,
            hyper: BTreeMap::new(),
            vocab_hash: "h".into(),
            tensors: vec![("t".into(), Tensor::vector(vec![1.0, 2.0]))],
        };
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(ck.require_vocab("other").is_err());
    }
}
