use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::homophily::{homophily_report, ClassShareWeighting, HomophilyReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub name: Option<String>,
    pub nodes: usize,
    pub feature_dim: usize,
    pub classes: usize,
    /// `2|E|` in the symmetric, loop-free storage.
    pub directed_edge_count: usize,
    /// Distinct directed pairs in the upstream dump, when known.
    pub source_edge_count: Option<u64>,
    pub isolated_nodes: usize,
    pub class_counts: Vec<usize>,
    pub homophily: HomophilyReport,
}

impl DatasetStats {
    /// The edge count comparable to published tables: the upstream count when
    /// recorded, otherwise `2|E|`.
    pub fn reported_edge_count(&self) -> u64 {
        self.source_edge_count.unwrap_or(self.directed_edge_count as u64)
    }
}

pub fn dataset_stats(g: &Graph, weighting: ClassShareWeighting) -> DatasetStats {
    let mut class_counts = vec![0; g.n_classes()];
    for &y in g.labels() {
        class_counts[y as usize] += 1;
    }
    DatasetStats {
        name: g.name().map(str::to_owned),
        nodes: g.n(),
        feature_dim: g.feature_dim(),
        classes: g.n_classes(),
        directed_edge_count: g.directed_edge_count(),
        source_edge_count: g.source_edge_count(),
        isolated_nodes: (0..g.n()).filter(|&v| g.degree(v) == 0).count(),
        class_counts,
        homophily: homophily_report(g, weighting),
    }
}
