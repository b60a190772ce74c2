//! Binary latent dump.
//!
//! Layout: `b"NCLF"`, then little-endian `u32` version (1), C, H, W, then
//! `C·H·W` little-endian `f32` values, channel-major and row-major.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{DumpError, Error, Result};
use crate::field::LatentField;

pub const MAGIC: [u8; 4] = *b"NCLF";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

pub fn encode_latent(x: &LatentField) -> Vec<u8> {
    let [c, h, w] = x.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * x.data().len());
    out.extend_from_slice(&MAGIC);
    for v in [VERSION, c as u32, h as u32, w as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in x.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub fn decode_latent(bytes: &[u8]) -> Result<LatentField> {
    if bytes.len() < 4 {
        return Err(DumpError::ShortHeader.into());
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(DumpError::BadMagic(magic).into());
    }
    if bytes.len() < HEADER_LEN {
        return Err(DumpError::ShortHeader.into());
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(DumpError::Version(version).into());
    }
    let (c, h, w) = (
        read_u32(bytes, 8) as usize,
        read_u32(bytes, 12) as usize,
        read_u32(bytes, 16) as usize,
    );
    let expected = c
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::InvalidShape(format!("{c}x{h}x{w} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(DumpError::Truncated {
            expected,
            actual: payload.len(),
        }
        .into());
    }
    let data = payload[..expected]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    LatentField::new(c, h, w, data)
}

pub fn write_latent(path: impl AsRef<Path>, x: &LatentField) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_latent(x))?;
    Ok(())
}

pub fn read_latent(path: impl AsRef<Path>) -> Result<LatentField> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_latent(&bytes)
}
