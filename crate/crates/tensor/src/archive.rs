//! Flat checkpoint archive: named tensors with shapes and little-endian values.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "DBGFQNAR"
//! schema       u32
//! entries      u32
//! per entry:
//!   name_len   u32, name (UTF-8)
//!   dtype      u8   (0 = f32, 1 = f64)
//!   ndim       u32, dims (u64 each)
//!   values     dtype-sized little-endian values, row-major
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::params::ParamSet;
use crate::{Scalar, Tensor};

pub const MAGIC: &[u8; 8] = b"DBGFQNAR";
pub const SCHEMA_VERSION: u32 = 1;

/// An ordered set of named tensors of one element type.
#[derive(Clone, Debug, PartialEq)]
pub struct Archive<T> {
    pub schema_version: u32,
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Default for Archive<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Archive<T> {
    pub fn new() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            entries: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = tensor,
            None => self.entries.push((name, tensor)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_params(params: &ParamSet<T>) -> Self {
        let mut a = Self::new();
        for (_, p) in params.iter() {
            a.insert(p.name.clone(), p.value.clone());
        }
        a
    }

    /// Overwrites every parameter from the entry with the same path.
    pub fn load_into(&self, params: &mut ParamSet<T>) -> Result<()> {
        let by_name: BTreeMap<&str, &Tensor<T>> =
            self.entries.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let ids: Vec<_> = params.iter().map(|(id, p)| (id, p.name.clone())).collect();
        for (id, name) in ids {
            let src = by_name
                .get(name.as_str())
                .ok_or_else(|| TensorError::Archive(format!("missing entry `{name}`")))?;
            let dst = params.value_mut(id);
            if dst.shape() != src.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "archive load",
                    left: dst.shape().to_vec(),
                    right: src.shape().to_vec(),
                });
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.schema_version.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(T::DTYPE);
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for d in t.shape() {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in t.data() {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(TensorError::Archive("bad magic".into()));
        }
        let schema_version = r.u32()?;
        if schema_version != SCHEMA_VERSION {
            return Err(TensorError::Archive(format!(
                "unsupported schema version {schema_version}"
            )));
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|e| TensorError::Archive(format!("entry name: {e}")))?
                .to_string();
            let dtype = r.take(1)?[0];
            if dtype != T::DTYPE {
                return Err(TensorError::Archive(format!(
                    "entry `{name}` has dtype {dtype}, expected {}",
                    T::DTYPE
                )));
            }
            let ndim = r.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n * T::BYTES)?;
            let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
            entries.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(TensorError::Archive("trailing bytes".into()));
        }
        Ok(Self {
            schema_version,
            entries,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| TensorError::Archive("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_truncated_input() {
        let mut a = Archive::<f32>::new();
        a.insert("w", Tensor::from_f64([2], &[1.0, 2.0]).unwrap());
        let bytes = a.to_bytes();
        assert!(Archive::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Archive::<f64>::from_bytes(&bytes).is_err());
        assert_eq!(Archive::<f32>::from_bytes(&bytes).unwrap(), a);
    }
}
