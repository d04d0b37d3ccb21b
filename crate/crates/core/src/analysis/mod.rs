//! Attention Graph construction and the analyses run on it.

mod flow;
mod quasi;
mod report;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AttentionRecord, AttentionVariant};
use crate::tensor::Scalar;

pub use flow::{
    attention_ratio, column_mass, gini, head_correlations, hop_attention_distribution, hop_samples,
    layer_correlations, pairwise_correlation, ColumnMass, Correlation, CorrelationDomain, CorrelationEntry,
    HopBucket, RatioMode,
};
pub use quasi::{f1_counts, f1_structure_recovery, threshold_to_quasi_adjacency, threshold_value, F1Counts, QuasiAdjacency, GRID_STEPS};
pub use report::{analyze, Analysis, AnalysisOptions, AnalysisReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("nothing to aggregate")]
    Empty,
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("the graph is complete; there are no non-neighbor pairs")]
    CompleteGraph,
    #[error("attention inside neighborhoods is zero everywhere")]
    ZeroNeighborMass,
}

/// Where an Attention Graph came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: Option<String>,
    pub variant: AttentionVariant,
    pub n_layers: usize,
    pub n_heads: usize,
    pub seed: Option<u64>,
}

/// The single `n × n` end-to-end attention matrix of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGraph {
    pub matrix: Array2<f64>,
    pub provenance: Provenance,
}

impl AttentionGraph {
    /// Heads averaged per layer, then layers multiplied.
    pub fn from_record(rec: &AttentionRecord, dataset: Option<&str>) -> Result<Self, AnalysisError> {
        let layers = layer_matrices(rec)?;
        Ok(Self {
            matrix: aggregate_layers(&layers)?,
            provenance: Provenance {
                dataset: dataset.map(str::to_owned),
                variant: rec.config.variant,
                n_layers: rec.n_layers(),
                n_heads: rec.n_heads(),
                seed: rec.seed,
            },
        })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Head-averaged matrix of every layer, first layer first.
pub fn layer_matrices(rec: &AttentionRecord) -> Result<Vec<Array2<f64>>, AnalysisError> {
    rec.matrices.iter().map(|heads| aggregate_heads(heads)).collect()
}

/// Elementwise mean over heads.
pub fn aggregate_heads<T: Scalar>(heads: &[Array2<T>]) -> Result<Array2<f64>, AnalysisError> {
    let first = heads.first().ok_or(AnalysisError::Empty)?;
    let mut sum = Array2::<f64>::zeros(first.dim());
    for h in heads {
        if h.dim() != first.dim() {
            return Err(AnalysisError::DimensionMismatch(first.dim(), h.dim()));
        }
        sum.zip_mut_with(h, |s, &v| *s += v.as_f64());
    }
    let k = heads.len() as f64;
    sum.mapv_inplace(|s| s / k);
    Ok(sum)
}

/// `A_{L_N} ··· A_{L_2} · A_{L_1}` for `layers = [A_{L_1}, …, A_{L_N}]`.
pub fn aggregate_layers(layers: &[Array2<f64>]) -> Result<Array2<f64>, AnalysisError> {
    let first = layers.first().ok_or(AnalysisError::Empty)?;
    let n = first.dim();
    if n.0 != n.1 {
        return Err(AnalysisError::DimensionMismatch(n, (n.1, n.0)));
    }
    let mut acc = first.clone();
    for later in &layers[1..] {
        if later.dim() != n {
            return Err(AnalysisError::DimensionMismatch(n, later.dim()));
        }
        acc = later.dot(&acc);
    }
    Ok(acc)
}
