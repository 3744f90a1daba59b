//! Binary snapshot of a run.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  8 bytes   "IPMCKPT\0"
//! len    u64       length of the metadata block
//! meta   len bytes UTF-8 JSON (`CheckpointMeta`)
//! f      n_x f64
//! g      n_x * n_z f64, bottom row first
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flatten::StripGrid;

pub const MAGIC: &[u8; 8] = b"IPMCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub version: u32,
    pub n_x: usize,
    pub n_z: usize,
    pub length: f64,
    pub z_bottom: f64,
    pub t: f64,
    pub delta: f64,
    /// Hex SHA-256 of the canonical configuration JSON.
    pub config_hash: String,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

/// Hex SHA-256 of `value` serialized with sorted keys.
pub fn config_hash(value: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(value).expect("json values always serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn corrupt(offset: usize, message: impl Into<String>) -> Error {
    Error::Checkpoint {
        offset,
        message: message.into(),
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let m = &self.meta;
        if self.f.len() != m.n_x || Some(self.g.len()) != m.n_x.checked_mul(m.n_z) {
            return Err(Error::InvalidInput("checkpoint arrays do not match the metadata grid".into()));
        }
        let meta = serde_json::to_vec(m).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + meta.len() + 8 * (self.f.len() + self.g.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        for v in self.f.iter().chain(&self.g) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(corrupt(0, "missing checkpoint magic"));
        }
        let mut pos = MAGIC.len();
        let len_bytes: [u8; 8] = bytes
            .get(pos..pos + 8)
            .ok_or_else(|| corrupt(pos, "truncated metadata length"))?
            .try_into()
            .expect("slice of eight bytes");
        let len = u64::from_le_bytes(len_bytes);
        let len_pos = pos;
        pos += 8;
        let remaining = (bytes.len() - pos) as u64;
        if len > remaining {
            return Err(corrupt(len_pos, format!("metadata length {len} exceeds the {remaining} remaining bytes")));
        }
        let end = pos + len as usize;
        // Peek at the version before the strict parse so old files get a
        // clear message instead of a field error.
        let raw: serde_json::Value =
            serde_json::from_slice(&bytes[pos..end]).map_err(|e| corrupt(pos, format!("metadata is not JSON: {e}")))?;
        match raw.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(corrupt(
                    pos,
                    format!("checkpoint format version {v} is not supported (expected {FORMAT_VERSION})"),
                ))
            }
            None => return Err(corrupt(pos, "metadata has no integer version")),
        }
        let meta: CheckpointMeta =
            serde_json::from_value(raw).map_err(|e| corrupt(pos, format!("invalid metadata: {e}")))?;
        pos = end;
        let count = meta
            .n_z
            .checked_add(1)
            .and_then(|r| r.checked_mul(meta.n_x))
            .ok_or_else(|| corrupt(pos, "grid dimensions overflow"))?;
        let need = count.checked_mul(8).ok_or_else(|| corrupt(pos, "grid dimensions overflow"))?;
        if bytes.len() - pos != need {
            return Err(corrupt(
                pos,
                format!("expected {need} bytes of field data, found {}", bytes.len() - pos),
            ));
        }
        let mut values = Vec::with_capacity(count);
        for (i, chunk) in bytes[pos..].chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().expect("chunk of eight bytes"));
            if !v.is_finite() {
                return Err(corrupt(pos + 8 * i, "non-finite field value"));
            }
            values.push(v);
        }
        let g = values.split_off(meta.n_x);
        Ok(Self { meta, f: values, g })
    }

    /// Rejects a checkpoint whose grid differs from `grid`.
    pub fn check_grid(&self, grid: &StripGrid) -> Result<()> {
        let m = &self.meta;
        let x = grid.x_grid();
        let same = m.n_x == x.len()
            && m.n_z == grid.nz()
            && (m.length - x.length()).abs() <= 1e-12 * x.length()
            && (m.z_bottom - grid.z_bot()).abs() <= 1e-12 * grid.z_bot().abs().max(1.0);
        if same {
            Ok(())
        } else {
            Err(Error::Grid(format!(
                "checkpoint grid {}x{} (length {}, bottom {}) does not match configured {}x{} (length {}, bottom {})",
                m.n_x,
                m.n_z,
                m.length,
                m.z_bottom,
                x.len(),
                grid.nz(),
                x.length(),
                grid.z_bot()
            )))
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
