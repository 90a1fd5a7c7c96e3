//! Versioned binary container shared by all checkpoints.
//!
//! Layout, little-endian throughout:
//! - 8 ASCII magic bytes naming container kind and version (e.g. `COREENC1`)
//! - u32 length of a UTF-8 JSON config blob, then the blob
//! - u64 count of f64 parameters, then the raw IEEE-754 values
//!
//! The parameter order is fixed by each writer and documented there;
//! round-trips are bitwise exact.

use crate::error::{CoreError, Result};

pub fn write(magic: &[u8; 8], config_json: &str, params: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 + config_json.len() + 8 + params.len() * 8);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
    out.extend_from_slice(config_json.as_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn read(bytes: &[u8], magic: &[u8; 8]) -> Result<(String, Vec<f64>)> {
    let kind = String::from_utf8_lossy(magic).into_owned();
    if bytes.len() < 8 {
        return Err(CoreError::Checkpoint(format!(
            "{kind}: stream too short for magic"
        )));
    }
    if &bytes[..8] != magic {
        return Err(CoreError::Checkpoint(format!(
            "{kind}: magic mismatch, found {:?}",
            String::from_utf8_lossy(&bytes[..8])
        )));
    }
    let mut pos = 8;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(CoreError::Checkpoint(format!(
                "{kind}: truncated stream at offset {pos}",
                pos = *pos
            )));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let json_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let json = String::from_utf8(take(&mut pos, json_len)?.to_vec())
        .map_err(|_| CoreError::Checkpoint(format!("{kind}: config is not UTF-8")))?;
    let n_params = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
    let raw = take(&mut pos, n_params * 8)?;
    if pos != bytes.len() {
        return Err(CoreError::Checkpoint(format!(
            "{kind}: {} trailing bytes",
            bytes.len() - pos
        )));
    }
    let params = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((json, params))
}
