//! Node, edge and class-adjusted homophily.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomophilyError {
    #[error("every node has degree 0")]
    AllIsolated,
    #[error("graph has no edges")]
    NoEdges,
    #[error("class shares are concentrated in a single class; adjusted homophily is undefined")]
    SingleClass,
}

/// How the class shares `p̄(k)` of adjusted homophily are weighted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassShareWeighting {
    /// `p̄(k) = Σ_{v: y_v = k} d(v) / 2|E|`.
    #[default]
    Degree,
    /// `p̄(k) = |{v: y_v = k}| / n`.
    Uniform,
}

impl std::str::FromStr for ClassShareWeighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "degree" => Ok(Self::Degree),
            "uniform" => Ok(Self::Uniform),
            other => Err(format!("unknown class-share weighting `{other}` (degree|uniform)")),
        }
    }
}

/// All three measures; a measure is `None` where it is undefined for the graph
/// (no edges, or a single class carrying all the share mass).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomophilyReport {
    pub node_homophily: Option<f64>,
    pub edge_homophily: Option<f64>,
    pub adjusted_homophily: Option<f64>,
    pub class_shares: Vec<f64>,
    pub weighting: ClassShareWeighting,
}

/// Mean over non-isolated nodes of the fraction of same-label neighbors.
/// Isolated nodes are left out of the mean.
pub fn node_homophily(g: &Graph) -> Result<f64, HomophilyError> {
    let labels = g.labels();
    let mut total = 0.0;
    let mut counted = 0usize;
    for v in 0..g.n() {
        let nbrs = g.neighbors(v);
        if nbrs.is_empty() {
            continue;
        }
        let same = nbrs.iter().filter(|&&u| labels[u as usize] == labels[v]).count();
        total += same as f64 / nbrs.len() as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(HomophilyError::AllIsolated);
    }
    Ok(total / counted as f64)
}

/// Fraction of undirected edges joining two nodes of the same class.
pub fn edge_homophily(g: &Graph) -> Result<f64, HomophilyError> {
    let m = g.undirected_edge_count();
    if m == 0 {
        return Err(HomophilyError::NoEdges);
    }
    let labels = g.labels();
    let same = g
        .edges()
        .filter(|&(u, v)| labels[u as usize] == labels[v as usize])
        .count();
    Ok(same as f64 / m as f64)
}

pub fn class_shares(g: &Graph, weighting: ClassShareWeighting) -> Vec<f64> {
    let mut mass = vec![0.0; g.n_classes()];
    let total = match weighting {
        ClassShareWeighting::Degree => {
            for v in 0..g.n() {
                mass[g.labels()[v] as usize] += g.degree(v) as f64;
            }
            g.directed_edge_count() as f64
        }
        ClassShareWeighting::Uniform => {
            for &y in g.labels() {
                mass[y as usize] += 1.0;
            }
            g.n() as f64
        }
    };
    if total > 0.0 {
        mass.iter_mut().for_each(|m| *m /= total);
    }
    mass
}

/// `(h_edge − Σ p̄(k)²) / (1 − Σ p̄(k)²)`.
pub fn adjusted_homophily(g: &Graph, weighting: ClassShareWeighting) -> Result<f64, HomophilyError> {
    let h_edge = edge_homophily(g)?;
    adjusted_from_parts(h_edge, &class_shares(g, weighting))
}

fn adjusted_from_parts(h_edge: f64, shares: &[f64]) -> Result<f64, HomophilyError> {
    let expected: f64 = shares.iter().map(|p| p * p).sum();
    if (1.0 - expected).abs() < 1e-12 {
        return Err(HomophilyError::SingleClass);
    }
    Ok((h_edge - expected) / (1.0 - expected))
}

pub fn homophily_report(g: &Graph, weighting: ClassShareWeighting) -> HomophilyReport {
    let edge = edge_homophily(g).ok();
    let shares = class_shares(g, weighting);
    HomophilyReport {
        node_homophily: node_homophily(g).ok(),
        edge_homophily: edge,
        adjusted_homophily: edge.and_then(|h| adjusted_from_parts(h, &shares).ok()),
        class_shares: shares,
        weighting,
    }
}
