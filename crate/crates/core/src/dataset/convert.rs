//! Converters from common upstream dataset dumps.
//!
//! * LINQS / Planetoid raw text: `<name>.content` rows of
//!   `paper_id f_1 … f_d class_name` and `<name>.cites` rows of
//!   `cited_id citing_id`.
//! * Geom-GCN split text used for Chameleon, Squirrel and the WebKB graphs:
//!   `out1_node_feature_label.txt` (`node_id<TAB>f_1,…,f_d<TAB>label`) and
//!   `out1_graph_edges.txt` (`src<TAB>dst`), each with one header line.
//!
//! Self-loops are dropped and edges are symmetrized. The number of distinct
//! directed pairs in the upstream edge file (self-loops included) is kept as
//! the graph's source edge count.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::DatasetError;
use crate::graph::Graph;

/// Summary of what a converter had to repair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConversionNotes {
    pub self_loops_dropped: usize,
    pub unknown_endpoints_dropped: usize,
    pub duplicate_records: usize,
}

fn parse_err(offset: usize, reason: impl Into<String>) -> DatasetError {
    DatasetError::Parse { offset: offset as u64, reason: reason.into() }
}

/// Iterates non-empty lines with their byte offsets.
fn lines_with_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = 0;
    text.split('\n').filter_map(move |line| {
        let at = offset;
        offset += line.len() + 1;
        let trimmed = line.trim_end_matches('\r');
        (!trimmed.trim().is_empty()).then_some((at, trimmed))
    })
}

fn build(
    n: usize,
    raw_edges: Vec<(usize, (u32, u32))>,
    features: Array2<f32>,
    labels: Vec<u32>,
    n_classes: usize,
    notes: &mut ConversionNotes,
) -> Result<Graph, DatasetError> {
    let mut distinct: HashSet<(u32, u32)> = HashSet::new();
    let mut edges = Vec::new();
    for (_, (u, v)) in raw_edges {
        if !distinct.insert((u, v)) {
            notes.duplicate_records += 1;
        }
        if u == v {
            notes.self_loops_dropped += 1;
            continue;
        }
        edges.push((u, v));
    }
    Ok(Graph::from_edges(n, &edges, features, labels, n_classes)?
        .with_source_edge_count(distinct.len() as u64))
}

pub fn from_planetoid_raw(
    content: &str,
    cites: &str,
    name: Option<&str>,
) -> Result<(Graph, ConversionNotes), DatasetError> {
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let mut rows: Vec<Vec<f32>> = Vec::new();
    let mut class_names: Vec<&str> = Vec::new();
    let mut dim = None;
    for (at, line) in lines_with_offsets(content) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(parse_err(at, "content row needs id, features and class"));
        }
        let id = fields[0];
        let feats = &fields[1..fields.len() - 1];
        match dim {
            None => dim = Some(feats.len()),
            Some(d) if d != feats.len() => {
                return Err(DatasetError::FeatureCountMismatch {
                    offset: at as u64,
                    expected: d as u64,
                    found: feats.len() as u64,
                })
            }
            _ => {}
        }
        let row = feats
            .iter()
            .map(|f| f.parse::<f32>().map_err(|e| parse_err(at, format!("feature `{f}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if ids.insert(id, rows.len() as u32).is_some() {
            return Err(parse_err(at, format!("duplicate node id `{id}`")));
        }
        rows.push(row);
        class_names.push(fields[fields.len() - 1]);
    }
    let n = rows.len();
    let d = dim.unwrap_or(0);
    let classes: Vec<&str> = class_names.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let labels = class_names
        .iter()
        .map(|c| classes.binary_search(c).unwrap() as u32)
        .collect();
    let features = Array2::from_shape_vec((n, d), rows.concat())
        .map_err(|e| parse_err(0, e.to_string()))?;

    let mut notes = ConversionNotes::default();
    let mut raw_edges = Vec::new();
    for (at, line) in lines_with_offsets(cites) {
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(at, "cites row must hold two ids"));
        };
        match (ids.get(a), ids.get(b)) {
            (Some(&u), Some(&v)) => raw_edges.push((at, (v, u))),
            _ => notes.unknown_endpoints_dropped += 1,
        }
    }
    let mut g = build(n, raw_edges, features, labels, classes.len(), &mut notes)?;
    if let Some(name) = name {
        g = g.with_name(name);
    }
    Ok((g, notes))
}

pub fn from_geom_gcn(
    node_feature_label: &str,
    graph_edges: &str,
    name: Option<&str>,
) -> Result<(Graph, ConversionNotes), DatasetError> {
    let mut nodes: Vec<(u32, Vec<f32>, u32)> = Vec::new();
    for (at, line) in lines_with_offsets(node_feature_label).skip(1) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(at, "expected `id<TAB>features<TAB>label`"));
        }
        let id = fields[0].trim().parse::<u32>().map_err(|e| parse_err(at, e.to_string()))?;
        let feats = fields[1]
            .split(',')
            .map(|f| f.trim().parse::<f32>().map_err(|e| parse_err(at, format!("feature `{f}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let label = fields[2].trim().parse::<u32>().map_err(|e| parse_err(at, e.to_string()))?;
        if let Some((_, first, _)) = nodes.first() {
            if first.len() != feats.len() {
                return Err(DatasetError::FeatureCountMismatch {
                    offset: at as u64,
                    expected: first.len() as u64,
                    found: feats.len() as u64,
                });
            }
        }
        nodes.push((id, feats, label));
    }
    let n = nodes.len();
    let d = nodes.first().map_or(0, |x| x.1.len());
    let mut features = Array2::zeros((n, d));
    let mut labels = vec![u32::MAX; n];
    for (id, feats, label) in nodes {
        let i = id as usize;
        if i >= n {
            return Err(DatasetError::NodeOutOfRange { offset: 0, id: id as u64, n: n as u64 });
        }
        features.row_mut(i).assign(&ndarray::ArrayView1::from(&feats));
        labels[i] = label;
    }
    if labels.contains(&u32::MAX) {
        return Err(parse_err(0, "node ids are not contiguous"));
    }
    let n_classes = labels.iter().max().map_or(0, |&m| m as usize + 1);

    let mut raw_edges = Vec::new();
    for (at, line) in lines_with_offsets(graph_edges).skip(1) {
        let mut it = line.split_whitespace();
        let (Some(a), Some(b)) = (it.next(), it.next()) else {
            return Err(parse_err(at, "edge row must hold two ids"));
        };
        let u = a.parse::<u32>().map_err(|e| parse_err(at, e.to_string()))?;
        let v = b.parse::<u32>().map_err(|e| parse_err(at, e.to_string()))?;
        for id in [u, v] {
            if id as usize >= n {
                return Err(DatasetError::NodeOutOfRange { offset: at as u64, id: id as u64, n: n as u64 });
            }
        }
        raw_edges.push((at, (u, v)));
    }
    let mut notes = ConversionNotes::default();
    let mut g = build(n, raw_edges, features, labels, n_classes, &mut notes)?;
    if let Some(name) = name {
        g = g.with_name(name);
    }
    Ok((g, notes))
}

pub fn planetoid_files(
    content: impl AsRef<Path>,
    cites: impl AsRef<Path>,
    name: Option<&str>,
) -> Result<(Graph, ConversionNotes), DatasetError> {
    from_planetoid_raw(&fs::read_to_string(content)?, &fs::read_to_string(cites)?, name)
}

pub fn geom_gcn_files(
    node_feature_label: impl AsRef<Path>,
    graph_edges: impl AsRef<Path>,
    name: Option<&str>,
) -> Result<(Graph, ConversionNotes), DatasetError> {
    from_geom_gcn(
        &fs::read_to_string(node_feature_label)?,
        &fs::read_to_string(graph_edges)?,
        name,
    )
}
