use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SplitError {
    #[error("need at least 10 nodes to split, got {0}")]
    TooFewNodes(usize),
}

/// Disjoint train/validation/test node ids covering every node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub stratified: bool,
}

/// `(floor(0.4 n), floor(0.3 n), remainder)`.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 4 / 10;
    let val = n * 3 / 10;
    (train, val, n - train - val)
}

/// Unstratified 40/30/30 split, a pure function of `(n, seed)`.
pub fn generate_split(g: &Graph, seed: u64) -> Result<NodeSplit, SplitError> {
    generate_split_with(g, seed, false)
}

/// With `stratified`, the shuffled order is re-sorted by each node's relative
/// rank inside its class, so every prefix holds classes in proportion. Split
/// sizes are identical to the unstratified case.
pub fn generate_split_with(g: &Graph, seed: u64, stratified: bool) -> Result<NodeSplit, SplitError> {
    let n = g.n();
    if n < 10 {
        return Err(SplitError::TooFewNodes(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::seeded(seed), &mut order);

    if stratified {
        let labels = g.labels();
        let mut class_size = vec![0usize; g.n_classes()];
        for &y in labels {
            class_size[y as usize] += 1;
        }
        let mut seen = vec![0usize; g.n_classes()];
        let mut keyed: Vec<(f64, usize)> = order
            .iter()
            .map(|&v| {
                let y = labels[v] as usize;
                let rank = seen[y];
                seen[y] += 1;
                ((rank as f64 + 0.5) / class_size[y] as f64, v)
            })
            .collect();
        // stable: ties keep shuffled order
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
        order = keyed.into_iter().map(|(_, v)| v).collect();
    }

    let (train, val, _) = split_sizes(n);
    let test = order.split_off(train + val);
    let val_ids = order.split_off(train);
    Ok(NodeSplit { train: order, val: val_ids, test, seed, stratified })
}
