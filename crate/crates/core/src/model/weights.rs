//! Little-endian weight file:
//!
//! ```text
//! magic    8 bytes  "DTLNWTS1"
//! version  u32
//! topology u32 length + UTF-8 name
//! count    u32
//! per tensor:
//!   name   u32 length + UTF-8
//!   rank   u32
//!   dims   rank x u32
//!   data   prod(dims) x f32
//! ```

use std::path::Path;

use super::{check_tensor_table, ModelParams, TopologySpec};
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const WEIGHT_MAGIC: &[u8; 8] = b"DTLNWTS1";
pub const WEIGHT_VERSION: u32 = 1;

/// Serializes parameters; values are stored as `f32`.
pub fn write_weights(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 4 * params.num_params());
    out.extend_from_slice(WEIGHT_MAGIC);
    out.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
    put_str(&mut out, &params.topology.name);
    out.extend_from_slice(&(params.tensors.len() as u32).to_le_bytes());
    for t in &params.tensors {
        put_str(&mut out, &t.name);
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &t.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        let slice = self.bytes.get(self.pos..end).ok_or(Error::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::InvalidArgument("weight file string is not UTF-8".into()))
    }
}

/// Parses a weight file. With `expected`, the tensor table is checked
/// against that topology; otherwise the stored topology name is looked up.
pub fn read_weights(bytes: &[u8], expected: Option<&TopologySpec>) -> Result<ModelParams> {
    if bytes.len() < WEIGHT_MAGIC.len() {
        return Err(if WEIGHT_MAGIC.starts_with(bytes) {
            Error::Truncated
        } else {
            Error::NotAWeightFile
        });
    }
    if &bytes[..8] != WEIGHT_MAGIC {
        return Err(Error::NotAWeightFile);
    }
    let mut r = Reader { bytes, pos: 8 };
    let version = r.u32()?;
    if version != WEIGHT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let name = r.string()?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let tname = r.string()?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(Error::Truncated)?;
        let raw = r.take(numel.checked_mul(4).ok_or(Error::Truncated)?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        tensors.push(Tensor::new(tname, shape, data));
    }
    if r.pos != bytes.len() {
        return Err(Error::InvalidArgument(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - r.pos
        )));
    }

    let topology = match expected {
        Some(spec) => {
            check_tensor_table(spec, &tensors)?;
            if spec.name != name {
                return Err(Error::TopologyMismatch {
                    expected: spec.name.clone(),
                    found: name,
                });
            }
            spec.clone()
        }
        None => TopologySpec::named(&name)?,
    };
    ModelParams::new(topology, tensors)
}

pub fn save_weights(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_weights(params)).map_err(|e| Error::io(path, e))
}

/// Loads a weight file of any registered topology.
pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_weights(&bytes, None)
}

/// Loads a weight file that must match `spec`.
pub fn load_weights_for(path: impl AsRef<Path>, spec: &TopologySpec) -> Result<ModelParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_weights(&bytes, Some(spec))
}
