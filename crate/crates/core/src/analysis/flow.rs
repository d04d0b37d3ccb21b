use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{aggregate_heads, AnalysisError};
use crate::graph::{Graph, HopDistanceMatrix};
use crate::model::{AttentionRecord, AttentionVariant};

/// How non-neighbor and neighborhood attention are averaged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioMode {
    /// One mean over all qualifying entries per side.
    #[default]
    Entry,
    /// The ratio per row, averaged over rows that have non-neighbors.
    PerNode,
}

/// Mean attention to non-neighbors (`i ≠ j`, no edge) divided by mean
/// attention inside the neighborhood, where self counts as a neighbor.
pub fn attention_ratio(ag: &Array2<f64>, g: &Graph, mode: RatioMode) -> Result<f64, AnalysisError> {
    let n = g.n();
    if ag.dim() != (n, n) {
        return Err(AnalysisError::DimensionMismatch(ag.dim(), (n, n)));
    }
    let mut adj = vec![false; n];
    let (mut out_sum, mut out_cnt, mut in_sum, mut in_cnt) = (0.0, 0usize, 0.0, 0usize);
    let mut per_node = Vec::new();
    for i in 0..n {
        g.fill_adjacency_row(i, &mut adj);
        adj[i] = true;
        let (mut os, mut oc, mut is, mut ic) = (0.0, 0usize, 0.0, 0usize);
        for (j, &v) in ag.row(i).iter().enumerate() {
            if adj[j] {
                is += v;
                ic += 1;
            } else {
                os += v;
                oc += 1;
            }
        }
        out_sum += os;
        out_cnt += oc;
        in_sum += is;
        in_cnt += ic;
        if oc > 0 {
            let inside = is / ic as f64;
            if inside > 0.0 {
                per_node.push((os / oc as f64) / inside);
            }
        }
    }
    if out_cnt == 0 {
        return Err(AnalysisError::CompleteGraph);
    }
    match mode {
        RatioMode::Entry => {
            if in_sum == 0.0 {
                return Err(AnalysisError::ZeroNeighborMass);
            }
            Ok((out_sum / out_cnt as f64) / (in_sum / in_cnt as f64))
        }
        RatioMode::PerNode => {
            if per_node.is_empty() {
                return Err(AnalysisError::ZeroNeighborMass);
            }
            Ok(per_node.iter().sum::<f64>() / per_node.len() as f64)
        }
    }
}

/// Attention statistics of all ordered pairs at one hop distance;
/// `hop = None` collects unreachable pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopBucket {
    pub hop: Option<u32>,
    pub mean: f64,
    pub count: u64,
}

/// Buckets every ordered pair by hop distance (self is hop 0), reachable hops
/// ascending and the unreachable bucket last.
pub fn hop_attention_distribution(ag: &Array2<f64>, dist: &HopDistanceMatrix) -> Result<Vec<HopBucket>, AnalysisError> {
    let n = dist.n();
    if ag.dim() != (n, n) {
        return Err(AnalysisError::DimensionMismatch(ag.dim(), (n, n)));
    }
    let mut sums: BTreeMap<u32, (f64, u64)> = BTreeMap::new();
    let mut unreachable = (0.0, 0u64);
    for i in 0..n {
        for (j, h) in dist.row(i).enumerate() {
            let slot = match h {
                Some(h) => sums.entry(h).or_insert((0.0, 0)),
                None => &mut unreachable,
            };
            slot.0 += ag[[i, j]];
            slot.1 += 1;
        }
    }
    let mut out: Vec<HopBucket> = sums
        .into_iter()
        .map(|(hop, (s, c))| HopBucket { hop: Some(hop), mean: s / c as f64, count: c })
        .collect();
    if unreachable.1 > 0 {
        out.push(HopBucket { hop: None, mean: unreachable.0 / unreachable.1 as f64, count: unreachable.1 });
    }
    Ok(out)
}

/// Raw `(hop, value)` samples, at most `per_bucket` per hop taken with an even
/// stride in row-major order.
pub fn hop_samples(ag: &Array2<f64>, dist: &HopDistanceMatrix, per_bucket: usize) -> Vec<(Option<u32>, f64)> {
    let mut totals: BTreeMap<Option<u32>, u64> = BTreeMap::new();
    for i in 0..dist.n() {
        for h in dist.row(i) {
            *totals.entry(h).or_default() += 1;
        }
    }
    let mut seen: BTreeMap<Option<u32>, u64> = BTreeMap::new();
    let mut out = Vec::new();
    for i in 0..dist.n() {
        for (j, h) in dist.row(i).enumerate() {
            let total = totals[&h];
            let k = seen.entry(h).or_default();
            let stride = total.div_ceil(per_bucket.max(1) as u64);
            if *k % stride == 0 {
                out.push((h, ag[[i, j]]));
            }
            *k += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationDomain {
    /// Every entry.
    #[default]
    All,
    /// Entries where either matrix is nonzero.
    UnionSupport,
}

impl CorrelationDomain {
    /// Sparse variants share a zero mask that would dominate `r` over all
    /// entries.
    pub fn default_for(variant: AttentionVariant) -> Self {
        match variant {
            AttentionVariant::SC | AttentionVariant::SL => Self::UnionSupport,
            AttentionVariant::DLB | AttentionVariant::DL => Self::All,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "r")]
pub enum Correlation {
    Value(f64),
    /// One of the series is constant over the domain.
    NoVariance,
    /// Fewer than two entries in the domain.
    TooFewPairs,
}

impl Correlation {
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Value(r) => Some(r),
            _ => None,
        }
    }
}

/// Pearson correlation of corresponding entries, accumulated in one pass
/// with running co-moments.
pub fn pairwise_correlation(x: &Array2<f64>, y: &Array2<f64>, domain: CorrelationDomain) -> Result<Correlation, AnalysisError> {
    if x.dim() != y.dim() {
        return Err(AnalysisError::DimensionMismatch(x.dim(), y.dim()));
    }
    let (mut n, mut mx, mut my, mut sxx, mut syy, mut sxy) = (0f64, 0f64, 0f64, 0f64, 0f64, 0f64);
    for (&a, &b) in x.iter().zip(y.iter()) {
        if domain == CorrelationDomain::UnionSupport && a == 0.0 && b == 0.0 {
            continue;
        }
        n += 1.0;
        let dx = a - mx;
        mx += dx / n;
        let dy = b - my;
        my += dy / n;
        sxx += dx * (a - mx);
        syy += dy * (b - my);
        sxy += dx * (b - my);
    }
    if n < 2.0 {
        return Ok(Correlation::TooFewPairs);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(Correlation::NoVariance);
    }
    Ok(Correlation::Value((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub layer_a: usize,
    pub head_a: Option<usize>,
    pub layer_b: usize,
    pub head_b: Option<usize>,
    pub correlation: Correlation,
}

/// Every unordered head pair within each layer.
pub fn head_correlations(rec: &AttentionRecord, domain: CorrelationDomain) -> Result<Vec<CorrelationEntry>, AnalysisError> {
    let mut out = Vec::new();
    for (l, heads) in rec.matrices.iter().enumerate() {
        let heads: Vec<Array2<f64>> = heads.iter().map(|h| h.mapv(f64::from)).collect();
        for a in 0..heads.len() {
            for b in a + 1..heads.len() {
                out.push(CorrelationEntry {
                    layer_a: l,
                    head_a: Some(a),
                    layer_b: l,
                    head_b: Some(b),
                    correlation: pairwise_correlation(&heads[a], &heads[b], domain)?,
                });
            }
        }
    }
    Ok(out)
}

/// Every unordered pair of head-averaged layers.
pub fn layer_correlations(rec: &AttentionRecord, domain: CorrelationDomain) -> Result<Vec<CorrelationEntry>, AnalysisError> {
    let layers: Vec<Array2<f64>> = rec.matrices.iter().map(|h| aggregate_heads(h)).collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for a in 0..layers.len() {
        for b in a + 1..layers.len() {
            out.push(CorrelationEntry {
                layer_a: a,
                head_a: None,
                layer_b: b,
                head_b: None,
                correlation: pairwise_correlation(&layers[a], &layers[b], domain)?,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMass {
    /// Attention received by each node: column sums.
    pub mass: Vec<f64>,
    pub gini: f64,
    /// `(node, mass)` of the largest entries, descending; ties by node id.
    pub top: Vec<(usize, f64)>,
}

pub fn column_mass(ag: &Array2<f64>, top_k: usize) -> ColumnMass {
    let mass: Vec<f64> = ag.columns().into_iter().map(|c| c.sum()).collect();
    let mut order: Vec<usize> = (0..mass.len()).collect();
    order.sort_by(|&a, &b| mass[b].total_cmp(&mass[a]).then(a.cmp(&b)));
    let top = order.iter().take(top_k).map(|&j| (j, mass[j])).collect();
    ColumnMass { gini: gini(&mass), mass, top }
}

/// Gini coefficient of non-negative values; 0 for an all-zero vector.
pub fn gini(values: &[f64]) -> f64 {
    let n = values.len();
    let total: f64 = values.iter().sum();
    if n == 0 || total <= 0.0 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let weighted: f64 = sorted.iter().enumerate().map(|(i, &x)| (2.0 * (i + 1) as f64 - n as f64 - 1.0) * x).sum();
    weighted / (n as f64 * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::shortest_path_lengths;
    use ndarray::array;

    fn path(n: usize) -> Graph {
        let edges: Vec<(u32, u32)> = (0..n as u32 - 1).map(|i| (i, i + 1)).collect();
        Graph::from_edges(n, &edges, Array2::zeros((n, 1)), vec![0; n], 2).unwrap()
    }

    #[test]
    fn uniform_ratio_is_one() {
        let g = path(5);
        let j = Array2::from_elem((5, 5), 0.2);
        assert!((attention_ratio(&j, &g, RatioMode::Entry).unwrap() - 1.0).abs() < 1e-12);
        assert!((attention_ratio(&j, &g, RatioMode::PerNode).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn masked_attention_ratio_is_exactly_zero() {
        let g = path(4);
        let a = Array2::from_shape_fn((4, 4), |(i, j)| if i == j || g.has_edge(i, j) { 1.0 } else { 0.0 });
        assert_eq!(attention_ratio(&a, &g, RatioMode::Entry).unwrap(), 0.0);
    }

    #[test]
    fn complete_graph_has_no_ratio() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)], Array2::zeros((3, 1)), vec![0; 3], 2).unwrap();
        let a = Array2::from_elem((3, 3), 1.0 / 3.0);
        assert_eq!(attention_ratio(&a, &g, RatioMode::Entry), Err(AnalysisError::CompleteGraph));
    }

    #[test]
    fn hop_buckets() {
        let mut g_edges = vec![(0u32, 1u32), (1, 2)];
        g_edges.push((3, 4));
        let g = Graph::from_edges(5, &g_edges, Array2::zeros((5, 1)), vec![0; 5], 2).unwrap();
        let d = shortest_path_lengths(&g);
        let j = Array2::from_elem((5, 5), 0.2);
        let b = hop_attention_distribution(&j, &d).unwrap();
        assert!(b.iter().all(|x| (x.mean - 0.2).abs() < 1e-15));
        assert_eq!(b.iter().map(|x| x.hop).collect::<Vec<_>>(), vec![Some(0), Some(1), Some(2), None]);
        assert_eq!(b.iter().map(|x| x.count).sum::<u64>(), 25);
        assert_eq!(b[3].count, 12);
        let samples = hop_samples(&j, &d, 2);
        assert!(samples.iter().filter(|s| s.0 == None).count() <= 2);
    }

    #[test]
    fn correlation_contract() {
        let x = array![[0.1, 0.5], [0.3, 0.9]];
        assert!((pairwise_correlation(&x, &x, CorrelationDomain::All).unwrap().value().unwrap() - 1.0).abs() < 1e-12);
        let y = x.mapv(|v| 1.0 - v);
        assert!((pairwise_correlation(&x, &y, CorrelationDomain::All).unwrap().value().unwrap() + 1.0).abs() < 1e-12);
        let flat = Array2::from_elem((2, 2), 0.25);
        assert_eq!(pairwise_correlation(&x, &flat, CorrelationDomain::All).unwrap(), Correlation::NoVariance);
        let zero = Array2::zeros((2, 2));
        assert_eq!(pairwise_correlation(&zero, &zero, CorrelationDomain::UnionSupport).unwrap(), Correlation::TooFewPairs);
    }

    #[test]
    fn column_mass_cases() {
        let j = Array2::from_elem((4, 4), 0.25);
        let c = column_mass(&j, 2);
        assert!(c.mass.iter().all(|&m| (m - 1.0).abs() < 1e-15));
        assert_eq!(c.gini, 0.0);
        assert_eq!(c.top, vec![(0, 1.0), (1, 1.0)]);
        let mut star = Array2::zeros((4, 4));
        star.column_mut(2).fill(1.0);
        let c = column_mass(&star, 1);
        assert_eq!(c.mass, vec![0.0, 0.0, 4.0, 0.0]);
        assert_eq!(c.top, vec![(2, 4.0)]);
        assert!((c.gini - 0.75).abs() < 1e-12);
    }
}
