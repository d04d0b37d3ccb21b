use serde::{Deserialize, Serialize};

use super::{
    attention_ratio, column_mass, f1_counts, head_correlations, hop_attention_distribution, layer_correlations,
    threshold_to_quasi_adjacency, AnalysisError, AttentionGraph, ColumnMass, CorrelationDomain, CorrelationEntry,
    F1Counts, HopBucket, Provenance, QuasiAdjacency, RatioMode,
};
use crate::graph::{shortest_path_lengths, Graph, HopDistanceMatrix};
use crate::homophily::{homophily_report, ClassShareWeighting, HomophilyReport};
use crate::model::AttentionRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    pub f1_include_diagonal: bool,
    pub ratio_mode: RatioMode,
    /// `None` picks the per-variant default.
    pub correlation_domain: Option<CorrelationDomain>,
    pub top_k: usize,
    /// `None` targets the number of nonzero adjacency entries, `2|E|`.
    pub target_edges: Option<usize>,
    pub class_share_weighting: ClassShareWeighting,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            f1_include_diagonal: true,
            ratio_mode: RatioMode::Entry,
            correlation_domain: None,
            top_k: 10,
            target_edges: None,
            class_share_weighting: ClassShareWeighting::Degree,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub provenance: Provenance,
    pub n: usize,
    pub threshold: f64,
    pub target_edges: usize,
    pub achieved_edges: usize,
    pub f1_include_diagonal: bool,
    pub f1_counts: F1Counts,
    pub f1_percent: f64,
    pub ratio_mode: RatioMode,
    /// `None` when undefined for the graph; see `ratio_note`.
    pub attention_ratio: Option<f64>,
    pub ratio_note: Option<String>,
    pub hop_distribution: Vec<HopBucket>,
    pub correlation_domain: CorrelationDomain,
    pub head_correlations: Vec<CorrelationEntry>,
    pub layer_correlations: Vec<CorrelationEntry>,
    pub column_mass: ColumnMass,
    pub homophily: HomophilyReport,
}

/// The full analysis of one captured model together with the intermediate
/// matrices it was computed from.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: AnalysisReport,
    pub graph: AttentionGraph,
    pub quasi: QuasiAdjacency,
}

pub fn analyze(
    rec: &AttentionRecord,
    g: &Graph,
    dist: Option<&HopDistanceMatrix>,
    options: &AnalysisOptions,
) -> Result<Analysis, AnalysisError> {
    if rec.n != g.n() {
        return Err(AnalysisError::DimensionMismatch((rec.n, rec.n), (g.n(), g.n())));
    }
    let owned;
    let dist = match dist {
        Some(d) => d,
        None => {
            owned = shortest_path_lengths(g);
            &owned
        }
    };
    let ag = AttentionGraph::from_record(rec, g.name())?;
    let target = options.target_edges.unwrap_or(g.directed_edge_count());
    let quasi = threshold_to_quasi_adjacency(&ag.matrix, target);
    let counts = f1_counts(&quasi.binary, g, options.f1_include_diagonal);
    let (ratio, note) = match attention_ratio(&ag.matrix, g, options.ratio_mode) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let domain = options.correlation_domain.unwrap_or(CorrelationDomain::default_for(rec.config.variant));
    let report = AnalysisReport {
        provenance: ag.provenance.clone(),
        n: g.n(),
        threshold: quasi.threshold,
        target_edges: quasi.target_edges,
        achieved_edges: quasi.achieved_edges,
        f1_include_diagonal: options.f1_include_diagonal,
        f1_counts: counts,
        f1_percent: counts.f1_percent(),
        ratio_mode: options.ratio_mode,
        attention_ratio: ratio,
        ratio_note: note,
        hop_distribution: hop_attention_distribution(&ag.matrix, dist)?,
        correlation_domain: domain,
        head_correlations: head_correlations(rec, domain)?,
        layer_correlations: layer_correlations(rec, domain)?,
        column_mass: column_mass(&ag.matrix, options.top_k),
        homophily: homophily_report(g, options.class_share_weighting),
    };
    Ok(Analysis { report, graph: ag, quasi })
}
