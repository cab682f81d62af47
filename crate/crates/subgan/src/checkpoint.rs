//! Model checkpoints: an architecture descriptor line followed by the
//! flattened parameters. Both forms restore every bit.
//!
//! Text: the descriptor, then one parameter per line in shortest
//! round-trip decimal. Binary: `SGCK`, a little-endian `u32` descriptor
//! length, the descriptor bytes, a `u64` count and the values as `f64` LE.

use std::fs;
use std::path::Path;

use subgan_core::Model;

use crate::error::{HarnessError, Result};

const MAGIC: &[u8; 4] = b"SGCK";

pub fn to_text(model: &Model) -> String {
    let mut s = model.descriptor();
    s.push('\n');
    for v in model.flat_params() {
        s.push_str(&v.to_string());
        s.push('\n');
    }
    s
}

pub fn from_text(text: &str) -> std::result::Result<Model, String> {
    let mut lines = text.lines();
    let desc = lines.next().ok_or("empty checkpoint")?;
    let mut model = Model::from_descriptor(desc).map_err(|e| e.to_string())?;
    let values: Vec<f64> = lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| format!("line {}: `{}` is not a number", i + 2, l.trim()))
        })
        .collect::<std::result::Result<_, _>>()?;
    model.set_flat_params(&values).map_err(|e| e.to_string())?;
    Ok(model)
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let desc = model.descriptor();
    let params = model.flat_params();
    let mut out = Vec::with_capacity(16 + desc.len() + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    out.extend_from_slice(desc.as_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Model, String> {
    let take = |at: usize, n: usize| bytes.get(at..at + n).ok_or("truncated checkpoint");
    if take(0, 4)? != MAGIC {
        return Err("not a binary checkpoint".into());
    }
    let dlen = u32::from_le_bytes(take(4, 4)?.try_into().expect("4 bytes")) as usize;
    let desc = std::str::from_utf8(take(8, dlen)?).map_err(|_| "descriptor is not UTF-8")?;
    let mut model = Model::from_descriptor(desc).map_err(|e| e.to_string())?;
    let at = 8 + dlen;
    let n = u64::from_le_bytes(take(at, 8)?.try_into().expect("8 bytes")) as usize;
    let body = take(at + 8, n.checked_mul(8).ok_or("parameter count overflows")?)?;
    if bytes.len() != at + 8 + 8 * n {
        return Err("trailing bytes after parameters".into());
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    model.set_flat_params(&values).map_err(|e| e.to_string())?;
    Ok(model)
}

pub fn save_text(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, to_text(model)).map_err(|e| HarnessError::io(path, e))
}

pub fn save_binary(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)).map_err(|e| HarnessError::io(path, e))
}

/// Reads either form, chosen by the leading magic bytes.
pub fn load(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    let parsed = if bytes.starts_with(MAGIC) {
        from_bytes(&bytes)
    } else {
        std::str::from_utf8(&bytes)
            .map_err(|_| "checkpoint is neither text nor binary".to_string())
            .and_then(from_text)
    };
    parsed.map_err(|m| HarnessError::format(path, m))
}
