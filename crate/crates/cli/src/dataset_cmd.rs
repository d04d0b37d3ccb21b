use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use attn_graphs::dataset::convert::{geom_gcn_files, planetoid_files};
use attn_graphs::dataset::{
    dataset_stats, generate_split_with, read_canonical, read_jsonl, write_canonical, write_jsonl, DatasetStats, LoadWarning,
};
use attn_graphs::graph::Graph;
use attn_graphs::homophily::ClassShareWeighting;
use clap::ValueEnum;
use serde::Serialize;

use crate::layout::write_atomic;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Canonical binary graph file.
    Agrf,
    /// One JSON object per line.
    Jsonl,
    /// `<name>.content` and `<name>.cites`.
    Planetoid,
    /// `out1_node_feature_label.txt` and `out1_graph_edges.txt`.
    GeomGcn,
}

fn guess_format(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("json") => Format::Jsonl,
        _ => Format::Agrf,
    }
}

/// Loads a single-file graph, returning what the loader repaired.
pub fn load_any(path: &Path, format: Option<Format>) -> Result<(Graph, Vec<LoadWarning>), CliError> {
    match format.unwrap_or_else(|| guess_format(path)) {
        Format::Agrf => Ok(read_canonical(&fs::read(path)?)?),
        Format::Jsonl => Ok(read_jsonl(BufReader::new(fs::File::open(path)?))?),
        f => Err(CliError::Config(format!("{f:?} input takes two files; use `dataset convert`"))),
    }
}

pub fn convert(format: Format, inputs: &[PathBuf], output: &Path, name: Option<&str>) -> Result<Graph, CliError> {
    let two = || -> Result<(&PathBuf, &PathBuf), CliError> {
        match inputs {
            [a, b] => Ok((a, b)),
            _ => Err(CliError::Config(format!("{format:?} conversion takes exactly two input files"))),
        }
    };
    let mut g = match format {
        Format::Planetoid => {
            let (content, cites) = two()?;
            let (g, notes) = planetoid_files(content, cites, name)?;
            log::info!("{notes:?}");
            g
        }
        Format::GeomGcn => {
            let (features, edges) = two()?;
            let (g, notes) = geom_gcn_files(features, edges, name)?;
            log::info!("{notes:?}");
            g
        }
        Format::Agrf | Format::Jsonl => {
            let [input] = inputs else {
                return Err(CliError::Config(format!("{format:?} conversion takes one input file")));
            };
            let (g, warnings) = load_any(input, Some(format))?;
            for w in warnings {
                log::warn!("{}: {w}", input.display());
            }
            g
        }
    };
    if let Some(name) = name {
        g = g.with_name(name);
    }
    match guess_format(output) {
        Format::Jsonl => write_atomic(output, |w| write_jsonl(&g, w))?,
        _ => write_atomic(output, |w| write_canonical(&g, w))?,
    }
    Ok(g)
}

#[derive(Serialize)]
pub struct SplitSummary {
    pub seed: u64,
    pub stratified: bool,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// Per-class node counts of the training ids.
    pub train_class_counts: Vec<usize>,
}

#[derive(Serialize)]
pub struct StatsOutput {
    #[serde(flatten)]
    pub stats: DatasetStats,
    pub reported_edge_count: u64,
    pub split: Option<SplitSummary>,
}

pub fn stats(g: &Graph, weighting: ClassShareWeighting, seed: Option<u64>, stratified: bool) -> Result<StatsOutput, CliError> {
    let split = match seed {
        Some(seed) => {
            let s = generate_split_with(g, seed, stratified).map_err(|e| CliError::Config(e.to_string()))?;
            let mut counts = vec![0; g.n_classes()];
            for &v in &s.train {
                counts[g.labels()[v] as usize] += 1;
            }
            Some(SplitSummary { seed, stratified, train: s.train.len(), val: s.val.len(), test: s.test.len(), train_class_counts: counts })
        }
        None => None,
    };
    let stats = dataset_stats(g, weighting);
    Ok(StatsOutput { reported_edge_count: stats.reported_edge_count(), stats, split })
}
