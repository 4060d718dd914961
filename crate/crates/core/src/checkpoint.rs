//! Versioned binary container for trained models.
//!
//! ```text
//! "MAGECKPT" | version u16 | kind str | meta str (JSON) | tensor count u32
//! per tensor: name str | length u64 | length × f64 (little-endian)
//! str = length u32 | utf-8 bytes
//! ```
//!
//! Structure (layer specs, dimensions, hyperparameters) lives in the JSON
//! metadata; every floating-point parameter lives in a tensor so that a
//! save/load cycle is bit-exact.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::math::{LayerSpec, Mlp, Parameters};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MAGECKPT";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: Value,
    tensors: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>) -> Self {
        Checkpoint {
            kind: kind.into(),
            meta: Value::Object(Default::default()),
            tensors: Vec::new(),
        }
    }

    pub fn set_meta<T: Serialize>(&mut self, key: &str, value: &T) -> Result<()> {
        let v = serde_json::to_value(value).map_err(|e| Error::Schema(e.to_string()))?;
        self.meta
            .as_object_mut()
            .expect("checkpoint meta is an object")
            .insert(key.to_string(), v);
        Ok(())
    }

    pub fn meta<T: DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self
            .meta
            .get(key)
            .ok_or_else(|| Error::Schema(format!("checkpoint {}: missing metadata {key:?}", self.kind)))?;
        serde_json::from_value(v.clone()).map_err(|e| Error::Schema(format!("metadata {key:?}: {e}")))
    }

    pub fn push(&mut self, name: impl Into<String>, values: &[f64]) {
        self.tensors.push((name.into(), values.to_vec()));
    }

    pub fn tensor(&self, name: &str) -> Result<&[f64]> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Schema(format!("checkpoint {}: missing tensor {name:?}", self.kind)))
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Schema(format!(
                "checkpoint holds a {:?}, expected {kind:?}",
                self.kind
            )));
        }
        Ok(())
    }

    /// Copies tensors `{prefix}{name}` into the model's parameter blocks.
    pub fn fill_params<P: Parameters + ?Sized>(&self, prefix: &str, model: &mut P) -> Result<()> {
        let names = model.param_names();
        for (name, block) in names.iter().zip(model.params_mut()) {
            let full = format!("{prefix}{name}");
            let t = self.tensor(&full)?;
            if t.len() != block.len() {
                return Err(Error::shape(format!("tensor {full}"), block.len(), t.len()));
            }
            block.copy_from_slice(t);
        }
        Ok(())
    }

    pub fn push_params<P: Parameters + ?Sized>(&mut self, prefix: &str, model: &P) {
        for (name, block) in model.param_names().iter().zip(model.params()) {
            self.push(format!("{prefix}{name}"), block);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        fn put_str(buf: &mut Vec<u8>, s: &str) {
            buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
            buf.extend_from_slice(s.as_bytes());
        }
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_str(&mut buf, &self.kind);
        put_str(&mut buf, &self.meta.to_string());
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, values) in &self.tensors {
            put_str(&mut buf, name);
            buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Reader { bytes, pos: 0 };
        if cur.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Schema("not a checkpoint file (bad magic)".into()));
        }
        let version = u16::from_le_bytes(cur.array()?);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!("unsupported checkpoint version {version}")));
        }
        let kind = cur.string()?;
        let meta: Value = serde_json::from_str(&cur.string()?).map_err(|e| Error::Schema(e.to_string()))?;
        let count = u32::from_le_bytes(cur.array()?);
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name = cur.string()?;
            let len = u64::from_le_bytes(cur.array()?) as usize;
            let raw = cur.take(
                len.checked_mul(8)
                    .ok_or_else(|| Error::Schema("tensor too large".into()))?,
            )?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push((name, values));
        }
        if cur.pos != bytes.len() {
            return Err(Error::Schema("trailing bytes after checkpoint".into()));
        }
        Ok(Checkpoint { kind, meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|e| e.context(format!("reading {}", path.display())))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Schema(format!("checkpoint truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn string(&mut self) -> Result<String> {
        let len = u32::from_le_bytes(self.array()?) as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|e| Error::Schema(e.to_string()))
    }
}

/// Models that can be stored in a [`Checkpoint`].
pub trait Checkpointable: Sized {
    const KIND: &'static str;

    fn to_checkpoint(&self) -> Result<Checkpoint>;
    fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self>;

    fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ckpt = Checkpoint::load(path)?;
        ckpt.expect_kind(Self::KIND)?;
        Self::from_checkpoint(&ckpt)
    }
}

#[derive(Serialize, Deserialize)]
struct MlpLayout {
    input_dim: usize,
    specs: Vec<LayerSpec>,
}

/// Stores a layer chain under `prefix`: layout in metadata, parameters and
/// batch-norm buffers as tensors.
pub fn export_mlp(ckpt: &mut Checkpoint, prefix: &str, mlp: &Mlp) -> Result<()> {
    ckpt.set_meta(
        prefix,
        &MlpLayout {
            input_dim: mlp.input_dim(),
            specs: mlp.specs().to_vec(),
        },
    )?;
    ckpt.push_params(&format!("{prefix}."), mlp);
    for (name, values) in mlp.buffers() {
        ckpt.push(format!("{prefix}.{name}"), values);
    }
    Ok(())
}

pub fn import_mlp(ckpt: &Checkpoint, prefix: &str) -> Result<Mlp> {
    let layout: MlpLayout = ckpt.meta(prefix)?;
    let mut mlp = Mlp::zeroed(layout.input_dim, layout.specs)?;
    ckpt.fill_params(&format!("{prefix}."), &mut mlp)?;
    for (name, buffer) in mlp.buffers_mut() {
        let full = format!("{prefix}.{name}");
        let t = ckpt.tensor(&full)?;
        if t.len() != buffer.len() {
            return Err(Error::shape(format!("tensor {full}"), buffer.len(), t.len()));
        }
        buffer.copy_from_slice(t);
    }
    Ok(mlp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{Activation, Rng};

    #[test]
    fn mlp_round_trip_is_bit_exact() {
        let specs = vec![
            LayerSpec::linear(3, 4),
            LayerSpec::batch_norm(4),
            LayerSpec::activation(Activation::leaky()),
            LayerSpec::dropout(0.2),
            LayerSpec::linear(4, 2),
        ];
        let mlp = Mlp::new(3, specs, &mut Rng::new(4)).unwrap();
        let mut ckpt = Checkpoint::new("test");
        export_mlp(&mut ckpt, "net", &mlp).unwrap();
        let back = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(import_mlp(&back, "net").unwrap(), mlp);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::from_bytes(b"MAGECKP").is_err());
        assert!(Checkpoint::from_bytes(b"NOTACHECKPOINT..").is_err());
        let mut bytes = Checkpoint::new("x").to_bytes();
        bytes.push(0);
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
