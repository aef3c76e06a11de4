use std::path::Path;

use crate::error::{EitError, Result};
use crate::fem::{MeasurementFrame, Protocol};
use crate::mesh::DEFAULT_ELECTRODES;

pub const FRAME_MAGIC: &[u8; 4] = b"EITF";
const FRAME_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 4 + 4 + 8;

fn protocol_flag(p: Protocol) -> u8 {
    match p {
        Protocol::AdjacentSkip => 0,
        Protocol::Full => 1,
    }
}

/// Little-endian frame file: magic `EITF`, version `u32`, protocol flag `u8`
/// (0 adjacent_skip, 1 full), electrode count `u32`, value count `u32`,
/// SNR `f64` (NaN when noise-free), then the values as `f64`.
pub fn frame_to_bytes(frame: &MeasurementFrame) -> Vec<u8> {
    let mut b = Vec::with_capacity(HEADER_LEN + 8 * frame.values.len());
    b.extend_from_slice(FRAME_MAGIC);
    b.extend_from_slice(&FRAME_VERSION.to_le_bytes());
    b.push(protocol_flag(frame.protocol));
    b.extend_from_slice(&(DEFAULT_ELECTRODES as u32).to_le_bytes());
    b.extend_from_slice(&(frame.values.len() as u32).to_le_bytes());
    b.extend_from_slice(&frame.snr_db.unwrap_or(f64::NAN).to_le_bytes());
    for v in &frame.values {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

pub fn frame_from_bytes(bytes: &[u8]) -> Result<MeasurementFrame> {
    let err = |field: String| EitError::format("frame file", field);
    if bytes.len() < HEADER_LEN {
        return Err(err(format!("header truncated ({} bytes)", bytes.len())));
    }
    if &bytes[0..4] != FRAME_MAGIC {
        return Err(err("magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != FRAME_VERSION {
        return Err(err(format!("version {version}")));
    }
    let protocol = match bytes[8] {
        0 => Protocol::AdjacentSkip,
        1 => Protocol::Full,
        f => return Err(err(format!("protocol flag {f}"))),
    };
    let electrodes = u32_at(9) as usize;
    if electrodes != DEFAULT_ELECTRODES {
        return Err(err(format!("electrode count {electrodes}")));
    }
    let count = u32_at(13) as usize;
    if count != protocol.len(electrodes) {
        return Err(err(format!("value count {count} for protocol {}", protocol.name())));
    }
    let snr = f64::from_le_bytes(bytes[17..25].try_into().unwrap());
    if bytes.len() != HEADER_LEN + 8 * count {
        return Err(err(format!("payload length {}", bytes.len() - HEADER_LEN)));
    }
    let values: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(err(format!("value {i} not finite")));
    }
    Ok(MeasurementFrame {
        protocol,
        values,
        snr_db: (!snr.is_nan()).then_some(snr),
    })
}

pub fn write_frame_file(path: &Path, frame: &MeasurementFrame) -> Result<()> {
    std::fs::write(path, frame_to_bytes(frame)).map_err(|e| EitError::io(path, e))
}

pub fn read_frame_file(path: &Path) -> Result<MeasurementFrame> {
    let bytes = std::fs::read(path).map_err(|e| EitError::io(path, e))?;
    frame_from_bytes(&bytes).map_err(|e| relabel(e, path))
}

fn relabel(e: EitError, path: &Path) -> EitError {
    match e {
        EitError::Format { field, .. } => EitError::format(path.display().to_string(), field),
        other => other,
    }
}

/// Imports a measured voltage vector. The text holds a `protocol =
/// adjacent_skip` (or `full`) line followed by the values in frame order,
/// separated by commas, whitespace or newlines; `#` starts a comment.
pub fn import_frame_csv(text: &str) -> Result<MeasurementFrame> {
    let err = |field: String| EitError::format("measurement csv", field);
    let mut protocol = None;
    let mut values = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some((k, v)) = line.split_once('=') {
            if k.trim() != "protocol" {
                return Err(err(format!("unknown header {}", k.trim())));
            }
            protocol = Some(Protocol::from_name(v.trim()).ok_or_else(|| err(format!("protocol {}", v.trim())))?);
            continue;
        }
        if protocol.is_none() {
            return Err(err("protocol header missing".into()));
        }
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f64 = tok.parse().map_err(|_| err(format!("value {} ({tok})", values.len())))?;
            if !v.is_finite() {
                return Err(err(format!("value {} not finite", values.len())));
            }
            values.push(v);
        }
    }
    let protocol = protocol.ok_or_else(|| err("protocol header missing".into()))?;
    let expected = protocol.len(DEFAULT_ELECTRODES);
    if values.len() != expected {
        return Err(err(format!("value count {} (expected {expected})", values.len())));
    }
    Ok(MeasurementFrame {
        protocol,
        values,
        snr_db: None,
    })
}
