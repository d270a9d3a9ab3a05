//! `CSPK` checkpoint container.
//!
//! Little-endian layout:
//!
//! ```text
//! "CSPK" | u32 version (1) | u32 meta length | UTF-8 JSON meta
//! u32 tensor count
//! per tensor: u16 name length | name | u8 ndim | u32 dims[ndim] | f32 values
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Head, Network, NetworkSpec};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::fsutil::{atomic_write, read_file};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"CSPK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub input_channels: usize,
    pub width: usize,
    pub num_classes: usize,
    pub head: Head,
    /// `Baseline`, `CSP-n`, `Scratch` or a fine-tune tag.
    pub strategy: String,
    pub encoder: Vec<String>,
    pub head_tensors: Vec<String>,
    pub steps: u64,
    pub seed: u64,
}

impl CheckpointMeta {
    pub fn spec(&self) -> NetworkSpec {
        NetworkSpec {
            input_channels: self.input_channels,
            width: self.width,
            num_classes: self.num_classes,
            head: self.head,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn from_network<T: Scalar>(net: &Network<T>, strategy: impl Into<String>, steps: u64, seed: u64) -> Self {
        let spec = net.spec();
        let meta = CheckpointMeta {
            format_version: FORMAT_VERSION,
            input_channels: spec.input_channels,
            width: spec.width,
            num_classes: spec.num_classes,
            head: spec.head,
            strategy: strategy.into(),
            encoder: net.encoder_names(),
            head_tensors: net.head_names(),
            steps,
            seed,
        };
        let tensors = net.names().iter().cloned().zip(net.params().iter().map(Tensor::cast)).collect();
        Self { meta, tensors }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_network<T: Scalar>(&self) -> Result<Network<T>> {
        let tensors = self.tensors.iter().map(|(n, t)| (n.clone(), t.cast())).collect();
        Network::from_tensors(self.meta.spec(), tensors)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta).expect("metadata serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            let len = u16::try_from(name.len()).map_err(|_| Error::shape(format!("tensor name too long: {name}")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.ndim() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses a full container. Any truncation or inconsistency fails the
    /// whole load.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).ok() != Some(MAGIC.as_slice()) {
            return Err(Error::BadMagic("expected CSPK checkpoint".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch(format!("format version {version}, expected {FORMAT_VERSION}")));
        }
        let meta_len = r.u32()? as usize;
        let meta: CheckpointMeta =
            serde_json::from_slice(r.take(meta_len)?).map_err(|e| Error::VersionMismatch(format!("metadata: {e}")))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::VersionMismatch("tensor name is not UTF-8".into()))?
                .to_string();
            let ndim = r.take(1)?[0] as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let bytes = numel
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| Error::VersionMismatch(format!("{name}: bad dims")))?;
            let data =
                r.take(bytes)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            let t = Tensor::new(shape, data).map_err(|e| Error::VersionMismatch(format!("{name}: {e}")))?;
            tensors.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(Error::VersionMismatch(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let ckpt = Self { meta, tensors };
        for name in ckpt.meta.encoder.iter().chain(&ckpt.meta.head_tensors) {
            if ckpt.tensor(name).is_none() {
                return Err(Error::MissingTensor(name.clone()));
            }
        }
        Ok(ckpt)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::VersionMismatch("checkpoint is truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    atomic_write(path, &ckpt.encode()?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::decode(&read_file(path)?)
}
