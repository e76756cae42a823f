//! Flat binary container for named parameter tensors.
//!
//! Layout: magic `KGC1`, u64 tensor count, then per tensor a u64 name
//! length, UTF-8 name bytes, u64 rows, u64 cols, and the row-major f64
//! little-endian payload.

use std::io::{Read, Write};
use std::path::Path;

use crate::Matrix64;

use super::NumericsError;

const MAGIC: &[u8; 4] = b"KGC1";

/// Ordered list of named tensors; order is part of the format so that
/// identical parameters serialize to identical bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Matrix64)>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Matrix64> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), NumericsError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(ckpt.tensors.len() as u64).to_le_bytes());
    for (name, m) in &ckpt.tensors {
        buf.extend_from_slice(&(name.len() as u64).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        for v in m.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, NumericsError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;

    let take = |pos: &mut usize, n: usize| -> Result<&[u8], NumericsError> {
        if *pos + n > bytes.len() {
            return Err(NumericsError::MalformedCheckpoint(format!(
                "truncated at byte {pos}",
                pos = *pos
            )));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let take_u64 = |pos: &mut usize| -> Result<u64, NumericsError> {
        let s = take(pos, 8)?;
        Ok(u64::from_le_bytes(s.try_into().expect("8 bytes")))
    };

    if take(&mut pos, 4)? != MAGIC {
        return Err(NumericsError::MalformedCheckpoint("bad magic".into()));
    }
    let count = take_u64(&mut pos)? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = take_u64(&mut pos)? as usize;
        let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
            .map_err(|e| NumericsError::MalformedCheckpoint(e.to_string()))?;
        let rows = take_u64(&mut pos)? as usize;
        let cols = take_u64(&mut pos)? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| NumericsError::MalformedCheckpoint("shape overflow".into()))?;
        let payload = take(&mut pos, n * 8)?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push((
            name,
            Matrix64::from_vec(rows, cols, data)
                .map_err(|e| NumericsError::MalformedCheckpoint(e.to_string()))?,
        ));
    }
    if pos != bytes.len() {
        return Err(NumericsError::MalformedCheckpoint(
            "trailing bytes after last tensor".into(),
        ));
    }
    Ok(Checkpoint { tensors })
}
