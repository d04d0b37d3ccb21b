//! Artifact paths under the output root, and atomic file writes.
//!
//! ```text
//! <out>/<dataset>/<variant>/<NL>L<NH>H/seed<k>/{run.json, model.agck, attention.agat, analysis.json, quasi_adjacency.pbm}
//! <out>/<dataset>/<variant>/<NL>L<NH>H/summary.json
//! <out>/{summary.csv, analysis.json, f1.csv, ratio.csv, hops.csv, corr.csv, column_mass.csv, report.json, report.txt}
//! ```

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::manifest::Cell;

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn cell_dir(&self, cell: &Cell) -> PathBuf {
        self.root.join(&cell.dataset).join(cell.variant.as_str()).join(cell.config.to_string())
    }

    pub fn seed_dir(&self, cell: &Cell, seed: u64) -> PathBuf {
        self.cell_dir(cell).join(format!("seed{seed}"))
    }

    pub fn run_json(&self, cell: &Cell, seed: u64) -> PathBuf {
        self.seed_dir(cell, seed).join("run.json")
    }

    pub fn checkpoint(&self, cell: &Cell, seed: u64) -> PathBuf {
        self.seed_dir(cell, seed).join("model.agck")
    }

    pub fn attention(&self, cell: &Cell, seed: u64) -> PathBuf {
        self.seed_dir(cell, seed).join("attention.agat")
    }

    pub fn seed_analysis(&self, cell: &Cell, seed: u64) -> PathBuf {
        self.seed_dir(cell, seed).join("analysis.json")
    }

    pub fn quasi_pbm(&self, cell: &Cell, seed: u64) -> PathBuf {
        self.seed_dir(cell, seed).join("quasi_adjacency.pbm")
    }

    pub fn cell_summary(&self, cell: &Cell) -> PathBuf {
        self.cell_dir(cell).join("summary.json")
    }

    pub fn top(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

/// Writes through a temporary file in the target directory, then renames it
/// over `path`, so readers never observe a partial file.
pub fn write_atomic<E>(path: &Path, write: impl FnOnce(&mut dyn Write) -> Result<(), E>) -> Result<(), E>
where
    E: From<io::Error>,
{
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::Builder::new().prefix(".partial-").tempfile_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> io::Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> io::Result<T> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))
}

/// Serializes `rows` as CSV with a header from the first row's fields.
pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> io::Result<()> {
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        for r in rows {
            out.serialize(r).map_err(io::Error::other)?;
        }
        out.flush()
    })
}

/// CSV with an explicit header, for tables whose columns depend on the data.
pub fn write_csv_records(path: &Path, header: &[String], rows: &[Vec<String>]) -> io::Result<()> {
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(header).map_err(io::Error::other)?;
        for r in rows {
            out.write_record(r).map_err(io::Error::other)?;
        }
        out.flush()
    })
}
