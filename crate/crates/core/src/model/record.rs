//! Captured attention matrices and the AGAT file.
//!
//! Layout: magic `AGAT`, `u32` version, `u64` header length, JSON header
//! `{config, seed, n}`, then `N_L · N_H` row-major `n × n` f32 matrices,
//! layer-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::binio::{self, FileError};
use super::{Forward, ModelConfig};
use crate::tensor::{Scalar, Tape};

const MAGIC: &[u8; 4] = b"AGAT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub config: ModelConfig,
    pub seed: Option<u64>,
    pub n: usize,
    /// `[layer][head]`, each `n × n`.
    pub matrices: Vec<Vec<Array2<f32>>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    seed: Option<u64>,
    n: usize,
}

impl AttentionRecord {
    pub(crate) fn from_tape<T: Scalar>(tape: &Tape<T>, out: &Forward, config: &ModelConfig) -> Self {
        let matrices: Vec<Vec<Array2<f32>>> = out
            .attention
            .iter()
            .map(|heads| heads.iter().map(|&v| tape.value(v).mapv(|x| x.as_f64() as f32)).collect())
            .collect();
        let n = matrices.first().and_then(|h| h.first()).map_or(0, Array2::nrows);
        Self { config: config.clone(), seed: None, n, matrices }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn n_layers(&self) -> usize {
        self.matrices.len()
    }

    pub fn n_heads(&self) -> usize {
        self.matrices.first().map_or(0, Vec::len)
    }

    /// The record with rows and columns relabelled by `perm[old] = new`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let matrices = self
            .matrices
            .iter()
            .map(|heads| {
                heads
                    .iter()
                    .map(|m| {
                        let mut out = Array2::zeros(m.dim());
                        for ((i, j), &v) in m.indexed_iter() {
                            out[[perm[i], perm[j]]] = v;
                        }
                        out
                    })
                    .collect()
            })
            .collect();
        Self { matrices, ..self.clone() }
    }
}

pub fn write_attention<W: Write>(rec: &AttentionRecord, mut w: W) -> Result<(), FileError> {
    let header = Header { config: rec.config.clone(), seed: rec.seed, n: rec.n };
    let json = serde_json::to_string(&header).map_err(|e| FileError::Header(e.to_string()))?;
    binio::write_header(&mut w, MAGIC, VERSION, &json)?;
    for m in rec.matrices.iter().flatten() {
        binio::write_f32s(&mut w, m.iter().copied())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_attention<R: Read>(mut r: R) -> Result<AttentionRecord, FileError> {
    let json = binio::read_header(&mut r, MAGIC, "attention record", VERSION)?;
    let h: Header = serde_json::from_str(&json).map_err(|e| FileError::Header(e.to_string()))?;
    let (layers, heads, n) = (h.config.n_layers, h.config.n_heads, h.n);
    let mut matrices = Vec::with_capacity(layers);
    for _ in 0..layers {
        let mut row = Vec::with_capacity(heads);
        for _ in 0..heads {
            let values = binio::read_f32s(&mut r, n * n)?;
            row.push(Array2::from_shape_vec((n, n), values).expect("length is n*n"));
        }
        matrices.push(row);
    }
    binio::expect_eof(&mut r)?;
    Ok(AttentionRecord { config: h.config, seed: h.seed, n, matrices })
}

pub fn save_attention(rec: &AttentionRecord, path: impl AsRef<Path>) -> Result<(), FileError> {
    write_attention(rec, BufWriter::new(File::create(path)?))
}

pub fn load_attention(path: impl AsRef<Path>) -> Result<AttentionRecord, FileError> {
    read_attention(BufReader::new(File::open(path)?))
}
