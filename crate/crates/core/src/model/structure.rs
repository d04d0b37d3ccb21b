use std::sync::Arc;

use ndarray::Array2;

use super::{AttentionVariant, ModelConfig, ModelError};
use crate::graph::{Graph, HopDistanceMatrix};
use crate::tensor::{Additive, Scalar, ScoreOffset};

/// What the attention sub-block receives about the graph.
#[derive(Debug, Clone)]
pub enum StructureKind<T> {
    /// Weight-independent coefficients used in place of attention.
    Constant(Arc<Array2<T>>),
    /// Added to the scaled scores before the row softmax.
    Offset(ScoreOffset<T>),
}

#[derive(Debug, Clone)]
pub struct AttentionStructure<T> {
    pub variant: AttentionVariant,
    pub n: usize,
    pub kind: StructureKind<T>,
}

impl<T: Scalar> AttentionStructure<T> {
    /// The DL structure. It needs only the node count.
    pub fn dense_unbiased(n: usize) -> Self {
        Self { variant: AttentionVariant::DL, n, kind: StructureKind::Offset(ScoreOffset::None) }
    }

    /// Entry view of a softmax structure: `Value(b)` or the mask marker.
    /// `None` for the constant (SC) structure.
    pub fn additive_entries(&self) -> Option<Array2<Additive<T>>> {
        let StructureKind::Offset(offset) = &self.kind else { return None };
        let n = self.n;
        Some(match offset {
            ScoreOffset::None => Array2::from_elem((n, n), Additive::Value(T::zero())),
            ScoreOffset::Bias(b) => b.mapv(Additive::Value),
            ScoreOffset::Mask(m) => m.mapv(|a| if a { Additive::Value(T::zero()) } else { Additive::NegInf }),
            ScoreOffset::MaskedBias { bias, allowed } => Array2::from_shape_fn((n, n), |ij| {
                if allowed[ij] {
                    Additive::Value(bias[ij])
                } else {
                    Additive::NegInf
                }
            }),
        })
    }

    pub fn constant(&self) -> Option<&Array2<T>> {
        match &self.kind {
            StructureKind::Constant(c) => Some(c),
            StructureKind::Offset(_) => None,
        }
    }
}

/// Builds the per-variant structure. `dist` is only read for DLB and may be
/// `None` otherwise; DL reads nothing but `g.n()`.
pub fn build_attention_structure<T: Scalar>(
    cfg: &ModelConfig,
    g: &Graph,
    dist: Option<&HopDistanceMatrix>,
) -> Result<AttentionStructure<T>, ModelError> {
    let n = g.n();
    let kind = match cfg.variant {
        AttentionVariant::DL => return Ok(AttentionStructure::dense_unbiased(n)),
        AttentionVariant::SC => {
            let deg: Vec<f64> = (0..n).map(|i| g.degree(i) as f64).collect();
            let mut c = Array2::<T>::zeros((n, n));
            for (i, j) in g.directed_edges() {
                let (i, j) = (i as usize, j as usize);
                c[[i, j]] = T::of(1.0 / (deg[i] * deg[j]).sqrt());
            }
            StructureKind::Constant(Arc::new(c))
        }
        AttentionVariant::SL => {
            let mut allowed = Array2::from_elem((n, n), false);
            for i in 0..n {
                allowed[[i, i]] = true;
                for &j in g.neighbors(i) {
                    allowed[[i, j as usize]] = true;
                }
            }
            StructureKind::Offset(ScoreOffset::Mask(Arc::new(allowed)))
        }
        AttentionVariant::DLB => {
            let dist = dist.ok_or_else(|| ModelError::Mismatch("DLB needs hop distances".into()))?;
            if dist.n() != n {
                return Err(ModelError::Mismatch(format!("distance matrix is {0}x{0}, graph has {n} nodes", dist.n())));
            }
            let self_bias = T::of(cfg.dlb_self_bias);
            let unreachable = T::of(cfg.dlb_unreachable_bias);
            let bias = Array2::from_shape_fn((n, n), |(i, j)| match dist.get(i, j) {
                Some(0) => self_bias,
                Some(h) => T::of(1.0 / h as f64),
                None => unreachable,
            });
            StructureKind::Offset(ScoreOffset::Bias(Arc::new(bias)))
        }
    };
    Ok(AttentionStructure { variant: cfg.variant, n, kind })
}
