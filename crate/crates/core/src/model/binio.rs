//! Little-endian helpers shared by the checkpoint and attention files.

use std::io::{self, Read, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a {expected} file (magic {found:?})")]
    BadMagic { expected: &'static str, found: [u8; 4] },
    #[error("unsupported {kind} version {version}")]
    UnsupportedVersion { kind: &'static str, version: u32 },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unexpected trailing data")]
    TrailingBytes,
}

pub(crate) fn write_header<W: Write>(w: &mut W, magic: &[u8; 4], version: u32, json: &str) -> io::Result<()> {
    w.write_all(magic)?;
    w.write_all(&version.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(json.as_bytes())
}

/// Reads magic, version and the JSON header; returns the header text.
pub(crate) fn read_header<R: Read>(
    r: &mut R,
    magic: &'static [u8; 4],
    kind: &'static str,
    version: u32,
) -> Result<String, FileError> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found)?;
    if &found != magic {
        return Err(FileError::BadMagic { expected: kind, found });
    }
    let v = read_u32(r)?;
    if v != version {
        return Err(FileError::UnsupportedVersion { kind, version: v });
    }
    let len = read_u64(r)?;
    if len > 1 << 24 {
        return Err(FileError::Header(format!("header length {len} is implausible")));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| FileError::Header(e.to_string()))
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn write_f32s<W: Write>(w: &mut W, values: impl Iterator<Item = f32>) -> io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f32s<R: Read>(r: &mut R, count: usize) -> io::Result<Vec<f32>> {
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub(crate) fn expect_eof<R: Read>(r: &mut R) -> Result<(), FileError> {
    let mut b = [0u8; 1];
    match r.read(&mut b)? {
        0 => Ok(()),
        _ => Err(FileError::TrailingBytes),
    }
}
