//! Model checkpoint file.
//!
//! Layout: magic `AGCK`, `u32` version, `u64` header length, JSON header
//! `{config, seed, epoch}`, `u64` parameter count, then per parameter in
//! name order: `u32` name length, UTF-8 name, `u64` rows, `u64` cols and
//! row-major f32 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::binio::{self, FileError};
use super::ModelConfig;
use crate::tensor::ParamStore;

const MAGIC: &[u8; 4] = b"AGCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub seed: u64,
    /// Epoch the parameters were taken from.
    pub epoch: usize,
    pub params: ParamStore<f32>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    seed: u64,
    epoch: usize,
}

pub fn write_checkpoint<W: Write>(ck: &Checkpoint, mut w: W) -> Result<(), FileError> {
    let header = Header { config: ck.config.clone(), seed: ck.seed, epoch: ck.epoch };
    let json = serde_json::to_string(&header).map_err(|e| FileError::Header(e.to_string()))?;
    binio::write_header(&mut w, MAGIC, VERSION, &json)?;
    w.write_all(&(ck.params.len() as u64).to_le_bytes())?;
    for (name, value) in ck.params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(value.nrows() as u64).to_le_bytes())?;
        w.write_all(&(value.ncols() as u64).to_le_bytes())?;
        binio::write_f32s(&mut w, value.iter().copied())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, FileError> {
    let json = binio::read_header(&mut r, MAGIC, "checkpoint", VERSION)?;
    let h: Header = serde_json::from_str(&json).map_err(|e| FileError::Header(e.to_string()))?;
    let count = binio::read_u64(&mut r)?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let len = binio::read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| FileError::Header(e.to_string()))?;
        let rows = binio::read_u64(&mut r)? as usize;
        let cols = binio::read_u64(&mut r)? as usize;
        let values = binio::read_f32s(&mut r, rows * cols)?;
        let value = Array2::from_shape_vec((rows, cols), values).expect("length is rows*cols");
        params.insert(name, value).map_err(|e| FileError::Header(e.to_string()))?;
    }
    binio::expect_eof(&mut r)?;
    Ok(Checkpoint { config: h.config, seed: h.seed, epoch: h.epoch, params })
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<(), FileError> {
    write_checkpoint(ck, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, FileError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
