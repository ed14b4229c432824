use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::TensorError;
use crate::param::ParamStore;

const MAGIC: &[u8; 8] = b"SUBACTCK";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Sidecar written next to the weights: format version, a hash of the config
/// that produced them, and free-form metadata (sorted, so the file is
/// byte-stable for equal content).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub config_hash: String,
    pub meta: BTreeMap<String, String>,
}

impl CheckpointManifest {
    pub fn new(config_hash: &str) -> CheckpointManifest {
        CheckpointManifest {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config_hash: config_hash.to_string(),
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: &str) -> CheckpointManifest {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn save(&self, path: &Path) -> Result<(), TensorError> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<CheckpointManifest, TensorError> {
        let text = fs::read_to_string(path)?;
        let manifest: CheckpointManifest = serde_json::from_str(&text)?;
        if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(TensorError::Checkpoint(format!(
                "unsupported manifest format version {}",
                manifest.format_version
            )));
        }
        Ok(manifest)
    }
}

/// Writes every parameter (registration order) as name, shape, and
/// little-endian f64 payload. Byte-identical for identical stores.
pub fn save_params(store: &ParamStore, path: &Path) -> Result<(), TensorError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(store.len() as u64).to_le_bytes());
    for (_, p) in store.iter() {
        let name = p.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
        for &d in &p.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &p.value {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

/// Reads back the entries written by [`save_params`].
pub fn load_params(path: &Path) -> Result<Vec<(String, Vec<usize>, Vec<f64>)>, TensorError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    let magic = cur.take(8)?;
    if magic != MAGIC {
        return Err(TensorError::Checkpoint("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != CHECKPOINT_FORMAT_VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported format version {version}")));
    }
    let count = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|e| TensorError::Checkpoint(format!("invalid parameter name: {e}")))?;
        let ndim = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize);
        }
        let n: usize = shape.iter().product();
        let mut value = Vec::with_capacity(n);
        for _ in 0..n {
            value.push(f64::from_le_bytes(cur.take(8)?.try_into().unwrap()));
        }
        entries.push((name, shape, value));
    }
    if cur.pos != bytes.len() {
        return Err(TensorError::Checkpoint("trailing bytes after last parameter".into()));
    }
    Ok(entries)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TensorError> {
        if self.pos + n > self.bytes.len() {
            return Err(TensorError::Checkpoint("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}
