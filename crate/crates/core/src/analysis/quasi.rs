use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::graph::Graph;

/// Thresholds are `k / GRID_STEPS` for `k = 0..=GRID_STEPS`.
pub const GRID_STEPS: usize = 1000;

pub fn threshold_value(k: usize) -> f64 {
    k as f64 / GRID_STEPS as f64
}

/// Binarised Attention Graph.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiAdjacency {
    /// `binary[i][j]` iff the attention entry is strictly above `threshold`.
    pub binary: Array2<bool>,
    pub threshold: f64,
    pub target_edges: usize,
    pub achieved_edges: usize,
}

impl QuasiAdjacency {
    pub fn gap(&self) -> i64 {
        self.achieved_edges as i64 - self.target_edges as i64
    }
}

/// Largest grid index `k` with `v > threshold_value(k)`, or `None`.
fn top_index(v: f64) -> Option<usize> {
    if !(v > 0.0) {
        return None;
    }
    let mut k = ((v * GRID_STEPS as f64).floor() as usize).min(GRID_STEPS);
    while k < GRID_STEPS && v > threshold_value(k + 1) {
        k += 1;
    }
    while !(v > threshold_value(k)) {
        if k == 0 {
            return None;
        }
        k -= 1;
    }
    Some(k)
}

/// Searches the threshold grid for the edge count closest to `target_edges`,
/// preferring the smaller threshold on ties. One pass builds a histogram of
/// per-entry grid positions; suffix sums give every threshold's count.
pub fn threshold_to_quasi_adjacency(matrix: &Array2<f64>, target_edges: usize) -> QuasiAdjacency {
    let mut hist = vec![0usize; GRID_STEPS + 1];
    for &v in matrix {
        if let Some(k) = top_index(v) {
            hist[k] += 1;
        }
    }
    let mut count_above = vec![0usize; GRID_STEPS + 2];
    for k in (0..=GRID_STEPS).rev() {
        count_above[k] = count_above[k + 1] + hist[k];
    }
    let mut best_k = 0;
    for k in 1..=GRID_STEPS {
        if count_above[k].abs_diff(target_edges) < count_above[best_k].abs_diff(target_edges) {
            best_k = k;
        }
    }
    let threshold = threshold_value(best_k);
    let binary = matrix.mapv(|v| v > threshold);
    QuasiAdjacency { binary, threshold, target_edges, achieved_edges: count_above[best_k] }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct F1Counts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

impl F1Counts {
    pub fn f1_percent(&self) -> f64 {
        let tp = self.true_positives as f64;
        let predicted = tp + self.false_positives as f64;
        let actual = tp + self.false_negatives as f64;
        if predicted == 0.0 || actual == 0.0 {
            return 0.0;
        }
        let (p, r) = (tp / predicted, tp / actual);
        if p + r == 0.0 {
            0.0
        } else {
            100.0 * 2.0 * p * r / (p + r)
        }
    }
}

/// Confusion counts of `predicted` against the adjacency of `g` over ordered
/// pairs, the diagonal optional.
pub fn f1_counts(predicted: &Array2<bool>, g: &Graph, include_diagonal: bool) -> F1Counts {
    let n = g.n();
    assert_eq!(predicted.dim(), (n, n), "quasi-adjacency and graph sizes differ");
    let mut c = F1Counts { true_positives: 0, false_positives: 0, false_negatives: 0 };
    let mut adj = vec![false; n];
    for i in 0..n {
        g.fill_adjacency_row(i, &mut adj);
        for (j, (&q, &a)) in predicted.row(i).iter().zip(&adj).enumerate() {
            if i == j && !include_diagonal {
                continue;
            }
            match (q, a) {
                (true, true) => c.true_positives += 1,
                (true, false) => c.false_positives += 1,
                (false, true) => c.false_negatives += 1,
                (false, false) => {}
            }
        }
    }
    c
}

/// F1 score (percent) of the quasi-adjacency as a predictor of the adjacency.
pub fn f1_structure_recovery(q: &QuasiAdjacency, g: &Graph, include_diagonal: bool) -> f64 {
    f1_counts(&q.binary, g, include_diagonal).f1_percent()
}
