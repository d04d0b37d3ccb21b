//! Undirected, unweighted node-classification graphs and hop-distance machinery.
//!
//! Adjacency is stored as a symmetric CSR structure without self-loops. Every
//! undirected edge `{u, v}` appears twice (once per orientation), so
//! [`Graph::directed_edge_count`] is `2|E|`.

use std::collections::{BTreeMap, VecDeque};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node id {id} out of range for graph with {n} nodes")]
    NodeOutOfRange { id: u64, n: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(u32),
    #[error("feature matrix has {rows} rows, expected {n}")]
    FeatureRows { rows: usize, n: usize },
    #[error("label vector has {len} entries, expected {n}")]
    LabelCount { len: usize, n: usize },
    #[error("label {label} of node {node} is not below the class count {n_classes}")]
    LabelOutOfRange { node: usize, label: u32, n_classes: usize },
    #[error("a node-classification graph needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("adjacency matrix is not symmetric at ({0}, {1})")]
    Asymmetric(usize, usize),
    #[error("permutation is not a bijection on 0..{0}")]
    BadPermutation(usize),
}

/// A node-classification graph: symmetric binary adjacency, dense features and
/// class labels in `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    features: Array2<f32>,
    labels: Vec<u32>,
    n_classes: usize,
    name: Option<String>,
    source_edge_count: Option<u64>,
}

impl Graph {
    /// Builds a graph from an edge list. Each pair is read as an undirected
    /// edge; orientation and duplicates do not matter.
    pub fn from_edges(
        n: usize,
        edges: &[(u32, u32)],
        features: Array2<f32>,
        labels: Vec<u32>,
        n_classes: usize,
    ) -> Result<Self, GraphError> {
        if features.nrows() != n {
            return Err(GraphError::FeatureRows { rows: features.nrows(), n });
        }
        if labels.len() != n {
            return Err(GraphError::LabelCount { len: labels.len(), n });
        }
        if n_classes < 2 {
            return Err(GraphError::TooFewClasses(n_classes));
        }
        if let Some((node, &label)) =
            labels.iter().enumerate().find(|(_, &l)| l as usize >= n_classes)
        {
            return Err(GraphError::LabelOutOfRange { node, label, n_classes });
        }

        let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            for id in [u, v] {
                if id as usize >= n {
                    return Err(GraphError::NodeOutOfRange { id: id as u64, n });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            adjacency[u as usize].push(v);
            adjacency[v as usize].push(u);
        }

        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for mut row in adjacency {
            row.sort_unstable();
            row.dedup();
            targets.extend_from_slice(&row);
            offsets.push(targets.len());
        }

        Ok(Self {
            n,
            offsets,
            targets,
            features,
            labels,
            n_classes,
            name: None,
            source_edge_count: None,
        })
    }

    /// Builds a graph from a dense boolean adjacency matrix, which must be
    /// symmetric with an empty diagonal.
    pub fn from_adjacency(
        adjacency: &Array2<bool>,
        features: Array2<f32>,
        labels: Vec<u32>,
        n_classes: usize,
    ) -> Result<Self, GraphError> {
        let n = adjacency.nrows();
        let mut edges = Vec::new();
        for i in 0..n {
            if adjacency[[i, i]] {
                return Err(GraphError::SelfLoop(i as u32));
            }
            for j in (i + 1)..n {
                if adjacency[[i, j]] != adjacency[[j, i]] {
                    return Err(GraphError::Asymmetric(i, j));
                }
                if adjacency[[i, j]] {
                    edges.push((i as u32, j as u32));
                }
            }
        }
        Self::from_edges(n, &edges, features, labels, n_classes)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    /// Records the edge count reported by the upstream source of this graph,
    /// which may count directed or duplicated edges differently.
    pub fn with_source_edge_count(mut self, count: u64) -> Self {
        self.source_edge_count = Some(count);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f32> {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn source_edge_count(&self) -> Option<u64> {
        self.source_edge_count
    }

    /// Sorted neighbor ids of node `i`.
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&(j as u32)).is_ok()
    }

    /// Number of stored orientations, `2|E|`.
    pub fn directed_edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn undirected_edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    /// Undirected edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&v| v as usize > u)
                .map(move |&v| (u as u32, v))
        })
    }

    /// Both orientations of every edge, grouped by source.
    pub fn directed_edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.n).flat_map(move |u| self.neighbors(u).iter().map(move |&v| (u as u32, v)))
    }

    pub fn adjacency_dense(&self) -> Array2<bool> {
        let mut a = Array2::from_elem((self.n, self.n), false);
        for (u, v) in self.directed_edges() {
            a[[u as usize, v as usize]] = true;
        }
        a
    }

    /// Fills `row` (length n) with the adjacency row of node `i`.
    pub fn fill_adjacency_row(&self, i: usize, row: &mut [bool]) {
        row.iter_mut().for_each(|x| *x = false);
        for &j in self.neighbors(i) {
            row[j as usize] = true;
        }
    }

    /// Relabels nodes so that old node `i` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GraphError> {
        let n = self.n;
        let mut seen = vec![false; n];
        if perm.len() != n {
            return Err(GraphError::BadPermutation(n));
        }
        for &p in perm {
            if p >= n || seen[p] {
                return Err(GraphError::BadPermutation(n));
            }
            seen[p] = true;
        }
        let edges: Vec<(u32, u32)> = self
            .edges()
            .map(|(u, v)| (perm[u as usize] as u32, perm[v as usize] as u32))
            .collect();
        let mut features = Array2::zeros(self.features.raw_dim());
        let mut labels = vec![0; n];
        for old in 0..n {
            features.row_mut(perm[old]).assign(&self.features.row(old));
            labels[perm[old]] = self.labels[old];
        }
        let mut g = Self::from_edges(n, &edges, features, labels, self.n_classes)?;
        g.name = self.name.clone();
        g.source_edge_count = self.source_edge_count;
        Ok(g)
    }

    /// Same nodes, features and labels with a different edge set.
    pub fn with_edges(&self, edges: &[(u32, u32)]) -> Result<Self, GraphError> {
        let mut g = Self::from_edges(
            self.n,
            edges,
            self.features.clone(),
            self.labels.clone(),
            self.n_classes,
        )?;
        g.name = self.name.clone();
        Ok(g)
    }
}

/// Node degrees, `d(v) = Σ_j a_vj`.
pub fn degree_vector(g: &Graph) -> Vec<usize> {
    (0..g.n()).map(|i| g.degree(i)).collect()
}

/// All-pairs hop distances. Disconnected pairs are reported as `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopDistanceMatrix {
    n: usize,
    dist: Vec<u32>,
}

const UNREACHABLE: u32 = u32::MAX;

impl HopDistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Hop count from `i` to `j`, or `None` when no path exists.
    pub fn get(&self, i: usize, j: usize) -> Option<u32> {
        match self.dist[i * self.n + j] {
            UNREACHABLE => None,
            d => Some(d),
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = Option<u32>> + '_ {
        self.dist[i * self.n..(i + 1) * self.n]
            .iter()
            .map(|&d| (d != UNREACHABLE).then_some(d))
    }

    /// Conjugates by a node relabelling (`perm[old] = new`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut dist = vec![UNREACHABLE; n * n];
        for i in 0..n {
            for j in 0..n {
                dist[perm[i] * n + perm[j]] = self.dist[i * n + j];
            }
        }
        Self { n, dist }
    }

    pub fn max_finite(&self) -> Option<u32> {
        self.dist.iter().copied().filter(|&d| d != UNREACHABLE).max()
    }
}

/// Breadth-first search from every source.
pub fn shortest_path_lengths(g: &Graph) -> HopDistanceMatrix {
    let n = g.n();
    let rows: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|source| {
            let mut row = vec![UNREACHABLE; n];
            let mut queue = VecDeque::new();
            row[source] = 0;
            queue.push_back(source);
            while let Some(u) = queue.pop_front() {
                let next = row[u] + 1;
                for &v in g.neighbors(u) {
                    let v = v as usize;
                    if row[v] == UNREACHABLE {
                        row[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            row
        })
        .collect();
    HopDistanceMatrix { n, dist: rows.concat() }
}

/// Ordered-pair counts per hop distance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopHistogram {
    pub by_hop: BTreeMap<u32, u64>,
    pub unreachable: u64,
}

impl HopHistogram {
    pub fn total(&self) -> u64 {
        self.by_hop.values().sum::<u64>() + self.unreachable
    }
}

pub fn hop_histogram(dist: &HopDistanceMatrix) -> HopHistogram {
    let mut hist = HopHistogram::default();
    for &d in &dist.dist {
        if d == UNREACHABLE {
            hist.unreachable += 1;
        } else {
            *hist.by_hop.entry(d).or_default() += 1;
        }
    }
    hist
}
