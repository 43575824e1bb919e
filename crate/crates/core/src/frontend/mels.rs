//! `MELS` feature dumps.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `MELS`                   |
//! | 4      | 2    | version (u16, currently 1)     |
//! | 6      | 4    | num_frames (u32)               |
//! | 10     | 4    | num_mels (u32)                 |
//! | 14     | 4·n  | f32 values, frame-major        |

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, IntegrityError, Result};
use crate::tensor::Tensor;

pub const MELS_MAGIC: [u8; 4] = *b"MELS";
pub const MELS_VERSION: u16 = 1;
const HEADER_LEN: usize = 14;

fn check_grid(t: &Tensor) -> Result<()> {
    if t.channels() != 1 {
        return Err(Error::contract(format!(
            "mel grid must have one channel, got {}",
            t.shape()
        )));
    }
    Ok(())
}

pub fn encode_mels(t: &Tensor) -> Result<Vec<u8>> {
    check_grid(t)?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * t.data().len());
    buf.extend_from_slice(&MELS_MAGIC);
    buf.extend_from_slice(&MELS_VERSION.to_le_bytes());
    buf.extend_from_slice(&(t.height() as u32).to_le_bytes());
    buf.extend_from_slice(&(t.width() as u32).to_le_bytes());
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_mels(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < HEADER_LEN {
        return Err(IntegrityError::Truncated(bytes.len()).into());
    }
    if bytes[..4] != MELS_MAGIC {
        return Err(IntegrityError::BadMagic {
            expected: MELS_MAGIC,
            found: bytes[..4].to_vec(),
        }
        .into());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != MELS_VERSION {
        return Err(IntegrityError::UnsupportedVersion(version).into());
    }
    let frames = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let mels = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 4 * frames * mels {
        return Err(IntegrityError::Malformed {
            section: "MELS body",
            reason: format!(
                "{frames}x{mels} grid needs {} bytes, found {}",
                4 * frames * mels,
                body.len()
            ),
        }
        .into());
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(frames, mels, 1, data).map_err(|e| {
        IntegrityError::Malformed {
            section: "MELS header",
            reason: e.to_string(),
        }
        .into()
    })
}

pub fn write_mels<W: Write>(mut w: W, t: &Tensor) -> Result<()> {
    let bytes = encode_mels(t)?;
    w.write_all(&bytes)
        .map_err(|e| Error::io("<mels writer>", e))
}

pub fn read_mels<R: Read>(mut r: R) -> Result<Tensor> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::io("<mels reader>", e))?;
    decode_mels(&bytes)
}

pub fn save_mels(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_mels(t)?).map_err(|e| Error::io(path, e))
}

pub fn load_mels(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    decode_mels(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Debug CSV: one line per frame, one column per mel band, no header.
pub fn write_mels_csv<W: Write>(w: W, t: &Tensor) -> Result<()> {
    check_grid(t)?;
    let mut out = csv::Writer::from_writer(w);
    let to_io = |e: csv::Error| Error::io("<csv writer>", e.into());
    for row in t.data().chunks_exact(t.width()) {
        out.write_record(row.iter().map(|v| v.to_string()))
            .map_err(to_io)?;
    }
    out.flush().map_err(|e| Error::io("<csv writer>", e))
}
