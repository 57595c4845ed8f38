//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "RAWNPCKP"
//! version    u32      = 1
//! n_meta     u32      followed by n_meta (key, value) string pairs
//! n_arrays   u32      followed by n_arrays manifest entries:
//!                       name: string, ndim: u32, dims: ndim x u64,
//!                       offset: u64 (byte offset into the payload)
//! payload    f64 values in row-major order, array after array
//! ```
//!
//! Strings are a `u32` byte length followed by UTF-8 bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{AutodiffError, Result};
use crate::graph::Matrix;
use crate::params::ParamStore;

pub const MAGIC: &[u8; 8] = b"RAWNPCKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: BTreeMap<String, String>,
    pub arrays: Vec<(String, Matrix)>,
}

fn bad(msg: impl Into<String>) -> AutodiffError {
    AutodiffError::Checkpoint(msg.into())
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| bad("truncated file"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| bad("invalid utf-8 string"))
    }
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, metadata: BTreeMap<String, String>) -> Self {
        let arrays = store
            .ids()
            .map(|id| (store.name(id).to_string(), store.value(id).clone()))
            .collect();
        Self { metadata, arrays }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        for (k, v) in &self.metadata {
            put_str(&mut buf, k);
            put_str(&mut buf, v);
        }
        buf.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        for (name, m) in &self.arrays {
            put_str(&mut buf, name);
            buf.extend_from_slice(&2u32.to_le_bytes());
            buf.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
            buf.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
            buf.extend_from_slice(&offset.to_le_bytes());
            offset += 8 * m.len() as u64;
        }
        for (_, m) in &self.arrays {
            for v in m.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(bad("bad magic header"));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let mut metadata = BTreeMap::new();
        for _ in 0..cur.u32()? {
            let k = cur.string()?;
            let v = cur.string()?;
            metadata.insert(k, v);
        }
        let n = cur.u32()? as usize;
        let mut manifest = Vec::with_capacity(n);
        for _ in 0..n {
            let name = cur.string()?;
            let ndim = cur.u32()?;
            let dims = (0..ndim)
                .map(|_| cur.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let offset = cur.u64()? as usize;
            let (rows, cols) = match dims.as_slice() {
                [r, c] => (*r, *c),
                [c] => (1, *c),
                _ => return Err(bad(format!("{name}: unsupported rank {ndim}"))),
            };
            manifest.push((name, rows, cols, offset));
        }
        let payload = &bytes[cur.pos..];
        let mut arrays = Vec::with_capacity(n);
        for (name, rows, cols, offset) in manifest {
            let len = rows * cols * 8;
            let chunk = payload
                .get(offset..offset + len)
                .ok_or_else(|| bad(format!("{name}: payload out of range")))?;
            let values: Vec<f64> = chunk
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let m = Matrix::from_shape_vec((rows, cols), values).expect("length matches shape");
            arrays.push((name, m));
        }
        Ok(Self { metadata, arrays })
    }

    /// Writes via a temporary sibling file and a rename, so an interrupted
    /// write never leaves a truncated checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// Copies every array into the same-named parameter of `store`. Names
    /// missing on either side and shape mismatches are hard errors.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        let by_name: BTreeMap<&str, &Matrix> =
            self.arrays.iter().map(|(n, m)| (n.as_str(), m)).collect();
        for id in store.ids().collect::<Vec<_>>() {
            let name = store.name(id).to_string();
            let m = by_name
                .get(name.as_str())
                .ok_or_else(|| bad(format!("missing array {name}")))?;
            if m.dim() != store.value(id).dim() {
                return Err(bad(format!(
                    "{name}: checkpoint shape {:?} does not match model shape {:?}",
                    m.dim(),
                    store.value(id).dim()
                )));
            }
            store.set(id, (*m).clone())?;
        }
        if let Some((extra, _)) = self.arrays.iter().find(|(n, _)| store.id(n).is_none()) {
            return Err(bad(format!("unexpected array {extra}")));
        }
        Ok(())
    }
}
