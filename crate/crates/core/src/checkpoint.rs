//! The `GFCK` tensor container used for encoder checkpoints, denoiser
//! checkpoints and dataset dumps.
//!
//! Layout: magic `GFCK`, version as little-endian u16, then zero or more
//! records of (name length u32, name bytes, rank u32, dims as u32 each,
//! payload as little-endian f32). Records run until end of file; order is
//! preserved, so writes are byte-stable.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"GFCK";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a GFCK container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("container truncated while reading {context}")]
    Truncated { context: &'static str },
    #[error("tensor name is not valid UTF-8")]
    InvalidName,
    #[error("tensor {name}: dims {dims:?} do not match payload length {len}")]
    ShapeMismatch {
        name: String,
        dims: Vec<u32>,
        len: usize,
    },
    #[error("missing tensor {0:?}")]
    MissingTensor(String),
}

/// One named tensor record.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn element_count(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&x| x as f64).collect()
    }

    pub fn scalar(&self) -> f32 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }
}

/// An ordered collection of named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    tensors: Vec<NamedTensor>,
    index: BTreeMap<String, usize>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert or replace a tensor. Panics if dims and payload disagree.
    pub fn insert(&mut self, name: &str, dims: Vec<u32>, data: Vec<f32>) {
        let count: usize = dims.iter().map(|&d| d as usize).product();
        assert_eq!(
            count,
            data.len(),
            "tensor {name}: dims {dims:?} vs payload {}",
            data.len()
        );
        let tensor = NamedTensor {
            name: name.to_string(),
            dims,
            data,
        };
        match self.index.get(name) {
            Some(&i) => self.tensors[i] = tensor,
            None => {
                self.index.insert(name.to_string(), self.tensors.len());
                self.tensors.push(tensor);
            }
        }
    }

    pub fn insert_f64(&mut self, name: &str, dims: Vec<u32>, data: &[f64]) {
        self.insert(name, dims, data.iter().map(|&x| x as f32).collect());
    }

    pub fn insert_scalar(&mut self, name: &str, value: f32) {
        self.insert(name, vec![1], vec![value]);
    }

    /// Store a u64 exactly as four 16-bit chunks (each exact in f32).
    pub fn insert_u64(&mut self, name: &str, value: u64) {
        let chunks: Vec<f32> = (0..4)
            .map(|i| ((value >> (16 * i)) & 0xffff) as f32)
            .collect();
        self.insert(name, vec![4], chunks);
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn require(&self, name: &str) -> Result<&NamedTensor, CheckpointError> {
        self.get(name)
            .ok_or_else(|| CheckpointError::MissingTensor(name.to_string()))
    }

    pub fn get_u64(&self, name: &str) -> Result<u64, CheckpointError> {
        let t = self.require(name)?;
        if t.data.len() != 4 {
            return Err(CheckpointError::ShapeMismatch {
                name: name.to_string(),
                dims: t.dims.clone(),
                len: t.data.len(),
            });
        }
        Ok(t.data
            .iter()
            .enumerate()
            .map(|(i, &c)| (c as u64) << (16 * i))
            .sum())
    }

    pub fn tensors(&self) -> &[NamedTensor] {
        &self.tensors
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self
            .tensors
            .iter()
            .map(|t| 8 + t.name.len() + 4 * t.dims.len() + 4 * t.data.len())
            .sum();
        let mut out = Vec::with_capacity(6 + payload);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for d in &t.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u16::from_le_bytes(r.take(2, "version")?.try_into().unwrap());
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let mut container = Self::new();
        while !r.done() {
            let name_len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "name")?)
                .map_err(|_| CheckpointError::InvalidName)?
                .to_string();
            let rank = r.u32("rank")? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32("dims")?);
            }
            let count: usize = dims.iter().map(|&d| d as usize).product();
            let raw = r.take(4 * count, "payload")?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            container.insert(&name, dims, data);
        }
        Ok(container)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, context: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated { context });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, context: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, context)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_tensors_and_order() {
        let mut c = Container::new();
        c.insert("weights/w1", vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        c.insert("weights/b1", vec![3], vec![0.5, -0.5, 0.25]);
        c.insert_scalar("step", 17.0);
        let bytes = c.to_bytes();
        let back = Container::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.tensors()[0].name, "weights/w1");
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn u64_round_trip_is_exact() {
        let mut c = Container::new();
        for value in [0u64, 1, 0xffff, 0x1234_5678_9abc_def0, u64::MAX] {
            c.insert_u64("seed", value);
            assert_eq!(c.get_u64("seed").unwrap(), value);
        }
    }

    #[test]
    fn insert_replaces_in_place() {
        let mut c = Container::new();
        c.insert("a", vec![1], vec![1.0]);
        c.insert("b", vec![1], vec![2.0]);
        c.insert("a", vec![2], vec![3.0, 4.0]);
        assert_eq!(c.tensors().len(), 2);
        assert_eq!(c.tensors()[0].data, vec![3.0, 4.0]);
    }

    #[test]
    fn bad_magic_rejected() {
        let err = Container::from_bytes(b"NOPE\x01\x00").unwrap_err();
        assert!(matches!(err, CheckpointError::BadMagic));
    }

    #[test]
    fn truncated_payload_rejected() {
        let mut c = Container::new();
        c.insert("t", vec![4], vec![1.0, 2.0, 3.0, 4.0]);
        let bytes = c.to_bytes();
        let err = Container::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, CheckpointError::Truncated { .. }));
    }

    #[test]
    fn unsupported_version_rejected() {
        let mut bytes = Container::new().to_bytes();
        bytes[4] = 9;
        let err = Container::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, CheckpointError::UnsupportedVersion(9)));
    }

    #[test]
    fn empty_container_round_trips() {
        let c = Container::new();
        assert_eq!(Container::from_bytes(&c.to_bytes()).unwrap(), c);
    }
}
