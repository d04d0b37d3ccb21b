//! The AGRF canonical dataset file and its JSON-lines twin.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! | offset | type            | field                                        |
//! |--------|-----------------|----------------------------------------------|
//! | 0      | `[u8; 4]`       | magic `AGRF`                                 |
//! | 4      | `u32`           | format version (1)                           |
//! | 8      | `u64`           | `n`, node count                              |
//! | 16     | `u64`           | `d`, feature dimension                       |
//! | 24     | `u64`           | `K`, class count                             |
//! | 32     | `u64`           | directed edge count `m` (both orientations)  |
//! | 40     | `u64`           | upstream edge count, `u64::MAX` when unknown |
//! | 48     | `u32` + bytes   | dataset name, UTF-8, length-prefixed         |
//! | ...    | `m × (u32,u32)` | directed edges                               |
//! | ...    | `n·d × f32`     | features, row-major                          |
//! | ...    | `n × u32`       | labels                                       |
//!
//! The file must end exactly after the label section.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::graph::Graph;

pub const MAGIC: &[u8; 4] = b"AGRF";
pub const FORMAT_VERSION: u32 = 1;
const NO_SOURCE_COUNT: u64 = u64::MAX;

/// Non-fatal irregularities repaired while loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoadWarning {
    /// Edges present in one orientation only; the reverse was added.
    Symmetrized { missing_orientations: usize },
    /// Repeated directed edge records were collapsed.
    DuplicateEdges { count: usize },
}

impl std::fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Symmetrized { missing_orientations } => write!(
                f,
                "{missing_orientations} edges were stored in one orientation only; symmetrized"
            ),
            Self::DuplicateEdges { count } => write!(f, "{count} duplicate edge records collapsed"),
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, section: &'static str) -> Result<&'a [u8], DatasetError> {
        if self.bytes.len() - self.pos < len {
            return Err(DatasetError::Truncated { offset: self.pos as u64, section });
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u32(&mut self, section: &'static str) -> Result<u32, DatasetError> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().unwrap()))
    }

    fn u64(&mut self, section: &'static str) -> Result<u64, DatasetError> {
        Ok(u64::from_le_bytes(self.take(8, section)?.try_into().unwrap()))
    }

    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

struct Header {
    n: u64,
    d: u64,
    k: u64,
    edge_count: u64,
    source_edge_count: Option<u64>,
    name: Option<String>,
}

fn malformed(offset: u64, reason: impl Into<String>) -> DatasetError {
    DatasetError::MalformedHeader { offset, reason: reason.into() }
}

fn read_header(c: &mut Cursor<'_>) -> Result<Header, DatasetError> {
    let magic = c.take(4, "header").map_err(|_| malformed(0, "file shorter than magic"))?;
    if magic != MAGIC {
        return Err(malformed(0, format!("bad magic {magic:?}")));
    }
    let at = c.offset();
    let version = c.u32("header")?;
    if version != FORMAT_VERSION {
        return Err(DatasetError::UnsupportedVersion { offset: at, version });
    }
    let n = c.u64("header")?;
    let d = c.u64("header")?;
    let k_at = c.offset();
    let k = c.u64("header")?;
    let edge_count = c.u64("header")?;
    let source = c.u64("header")?;
    if n > u32::MAX as u64 {
        return Err(malformed(8, format!("node count {n} exceeds u32 ids")));
    }
    if k < 2 {
        return Err(malformed(k_at, format!("class count {k} < 2")));
    }
    let name_at = c.offset();
    let name_len = c.u32("header")? as usize;
    let name = if name_len == 0 {
        None
    } else {
        let raw = c.take(name_len, "header")?;
        Some(
            std::str::from_utf8(raw)
                .map_err(|_| malformed(name_at, "dataset name is not UTF-8"))?
                .to_owned(),
        )
    };
    Ok(Header {
        n,
        d,
        k,
        edge_count,
        source_edge_count: (source != NO_SOURCE_COUNT).then_some(source),
        name,
    })
}

/// Flags duplicate records and edges stored in a single orientation.
fn check_orientations(directed: &[(u32, u32)], warnings: &mut Vec<LoadWarning>) {
    let mut seen: HashSet<(u32, u32)> = HashSet::with_capacity(directed.len());
    let mut duplicates = 0;
    for &e in directed {
        if !seen.insert(e) {
            duplicates += 1;
        }
    }
    let missing = seen.iter().filter(|&&(u, v)| !seen.contains(&(v, u))).count();
    if duplicates > 0 {
        warnings.push(LoadWarning::DuplicateEdges { count: duplicates });
    }
    if missing > 0 {
        warnings.push(LoadWarning::Symmetrized { missing_orientations: missing });
    }
}

/// Parses an AGRF image.
pub fn read_canonical(bytes: &[u8]) -> Result<(Graph, Vec<LoadWarning>), DatasetError> {
    let mut c = Cursor { bytes, pos: 0 };
    let h = read_header(&mut c)?;
    let n = h.n as usize;

    let mut directed = Vec::with_capacity(h.edge_count.min(1 << 28) as usize);
    for _ in 0..h.edge_count {
        let at = c.offset();
        let u = c.u32("edge")?;
        let v = c.u32("edge")?;
        for id in [u, v] {
            if id as u64 >= h.n {
                return Err(DatasetError::NodeOutOfRange { offset: at, id: id as u64, n: h.n });
            }
        }
        if u == v {
            return Err(DatasetError::SelfLoop { offset: at, node: u as u64 });
        }
        directed.push((u, v));
    }

    let expected = h.n * h.d;
    let feat_at = c.offset();
    let available = (c.remaining() as u64) / 4;
    let needed_after = h.n; // labels
    if available < expected + needed_after {
        return Err(DatasetError::FeatureCountMismatch {
            offset: feat_at,
            expected,
            found: available.saturating_sub(needed_after),
        });
    }
    let raw = c.take(expected as usize * 4, "feature")?;
    let values: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let features = Array2::from_shape_vec((n, h.d as usize), values)
        .map_err(|e| malformed(feat_at, e.to_string()))?;

    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let at = c.offset();
        let y = c.u32("label")?;
        if y as u64 >= h.k {
            return Err(DatasetError::LabelOutOfRange { offset: at, label: y as u64, k: h.k });
        }
        labels.push(y);
    }
    if c.remaining() != 0 {
        return Err(DatasetError::TrailingBytes { offset: c.offset() });
    }

    let mut warnings = Vec::new();
    check_orientations(&directed, &mut warnings);
    let mut g = Graph::from_edges(n, &directed, features, labels, h.k as usize)?;
    if let Some(name) = h.name {
        g = g.with_name(name);
    }
    if let Some(count) = h.source_edge_count {
        g = g.with_source_edge_count(count);
    }
    Ok((g, warnings))
}

pub fn load_canonical(path: impl AsRef<Path>) -> Result<Graph, DatasetError> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let (g, warnings) = read_canonical(&bytes)?;
    for w in warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(g)
}

pub fn write_canonical(g: &Graph, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for x in [
        g.n() as u64,
        g.feature_dim() as u64,
        g.n_classes() as u64,
        g.directed_edge_count() as u64,
        g.source_edge_count().unwrap_or(NO_SOURCE_COUNT),
    ] {
        w.write_all(&x.to_le_bytes())?;
    }
    let name = g.name().unwrap_or("").as_bytes();
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name)?;
    for (u, v) in g.directed_edges() {
        w.write_all(&u.to_le_bytes())?;
        w.write_all(&v.to_le_bytes())?;
    }
    for x in g.features().iter() {
        w.write_all(&x.to_le_bytes())?;
    }
    for y in g.labels() {
        w.write_all(&y.to_le_bytes())?;
    }
    w.flush()
}

pub fn save_canonical(g: &Graph, path: impl AsRef<Path>) -> std::io::Result<()> {
    write_canonical(g, BufWriter::new(fs::File::create(path)?))
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonHeader {
    format: String,
    version: u32,
    n: u64,
    d: u64,
    k: u64,
    directed_edge_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_edge_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum JsonRecord {
    Edge { edge: (u64, u64) },
    Node { node: u64, label: u64, features: Vec<f32> },
}

/// Writes the lossless JSON-lines twin: one header line, then one line per
/// directed edge, then one line per node.
pub fn write_jsonl(g: &Graph, mut w: impl Write) -> std::io::Result<()> {
    let header = JsonHeader {
        format: "AGRF".into(),
        version: FORMAT_VERSION,
        n: g.n() as u64,
        d: g.feature_dim() as u64,
        k: g.n_classes() as u64,
        directed_edge_count: g.directed_edge_count() as u64,
        source_edge_count: g.source_edge_count(),
        name: g.name().map(str::to_owned),
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for (u, v) in g.directed_edges() {
        serde_json::to_writer(&mut w, &JsonRecord::Edge { edge: (u as u64, v as u64) })?;
        writeln!(w)?;
    }
    for (i, row) in g.features().rows().into_iter().enumerate() {
        let rec = JsonRecord::Node {
            node: i as u64,
            label: g.labels()[i] as u64,
            features: row.to_vec(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        writeln!(w)?;
    }
    w.flush()
}

pub fn save_jsonl(g: &Graph, path: impl AsRef<Path>) -> std::io::Result<()> {
    write_jsonl(g, BufWriter::new(fs::File::create(path)?))
}

pub fn read_jsonl(reader: impl BufRead) -> Result<(Graph, Vec<LoadWarning>), DatasetError> {
    let parse_err = |offset: u64, e: serde_json::Error| DatasetError::Parse {
        offset,
        reason: e.to_string(),
    };
    let mut offset = 0u64;
    let mut lines = reader.split(b'\n');

    let first = lines
        .next()
        .ok_or_else(|| malformed(0, "empty file"))??;
    let header: JsonHeader =
        serde_json::from_slice(&first).map_err(|e| malformed(0, e.to_string()))?;
    if header.format != "AGRF" {
        return Err(malformed(0, format!("format tag `{}`", header.format)));
    }
    if header.version != FORMAT_VERSION {
        return Err(DatasetError::UnsupportedVersion { offset: 0, version: header.version });
    }
    if header.k < 2 {
        return Err(malformed(0, format!("class count {} < 2", header.k)));
    }
    offset += first.len() as u64 + 1;

    let n = header.n as usize;
    let d = header.d as usize;
    let mut directed = Vec::new();
    let mut features = Array2::<f32>::zeros((n, d));
    let mut labels = vec![None; n];
    for line in lines {
        let line = line?;
        let at = offset;
        offset += line.len() as u64 + 1;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        match serde_json::from_slice::<JsonRecord>(&line).map_err(|e| parse_err(at, e))? {
            JsonRecord::Edge { edge: (u, v) } => {
                for id in [u, v] {
                    if id >= header.n {
                        return Err(DatasetError::NodeOutOfRange { offset: at, id, n: header.n });
                    }
                }
                if u == v {
                    return Err(DatasetError::SelfLoop { offset: at, node: u });
                }
                directed.push((u as u32, v as u32));
            }
            JsonRecord::Node { node, label, features: row } => {
                if node >= header.n {
                    return Err(DatasetError::NodeOutOfRange { offset: at, id: node, n: header.n });
                }
                if row.len() != d {
                    return Err(DatasetError::FeatureCountMismatch {
                        offset: at,
                        expected: header.d,
                        found: row.len() as u64,
                    });
                }
                if label >= header.k {
                    return Err(DatasetError::LabelOutOfRange { offset: at, label, k: header.k });
                }
                features.row_mut(node as usize).assign(&ndarray::ArrayView1::from(&row));
                labels[node as usize] = Some(label as u32);
            }
        }
    }
    if let Some(missing) = labels.iter().position(Option::is_none) {
        return Err(DatasetError::Truncated {
            offset,
            section: if missing == 0 && n > 0 { "node" } else { "label" },
        });
    }
    let labels: Vec<u32> = labels.into_iter().map(Option::unwrap).collect();
    if directed.len() as u64 != header.directed_edge_count {
        return Err(malformed(
            0,
            format!(
                "header announces {} edges, found {}",
                header.directed_edge_count,
                directed.len()
            ),
        ));
    }

    let mut warnings = Vec::new();
    check_orientations(&directed, &mut warnings);
    let mut g = Graph::from_edges(n, &directed, features, labels, header.k as usize)?;
    if let Some(name) = header.name {
        g = g.with_name(name);
    }
    if let Some(count) = header.source_edge_count {
        g = g.with_source_edge_count(count);
    }
    Ok((g, warnings))
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Graph, DatasetError> {
    let path = path.as_ref();
    let (g, warnings) = read_jsonl(std::io::BufReader::new(fs::File::open(path)?))?;
    for w in warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(g)
}
