//! Published reference values bundled with the crate, used by reports and
//! acceptance checks. Every cell carries its coordinate (dataset, metric or
//! configuration, variant).

use serde::{Deserialize, Serialize};

use crate::homophily::HomophilyReport;
use crate::model::AttentionVariant;

pub const BUNDLED_JSON: &str = include_str!("../data/reference_values.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HomophilyMetric {
    Node,
    Edge,
    Adjusted,
}

impl HomophilyMetric {
    pub const ALL: [HomophilyMetric; 3] = [Self::Node, Self::Edge, Self::Adjusted];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Node => "node",
            Self::Edge => "edge",
            Self::Adjusted => "adjusted",
        }
    }

    /// The matching fraction from a computed report.
    pub fn of(self, r: &HomophilyReport) -> Option<f64> {
        match self {
            Self::Node => r.node_homophily,
            Self::Edge => r.edge_homophily,
            Self::Adjusted => r.adjusted_homophily,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomophilyCell {
    pub dataset: String,
    pub metric: HomophilyMetric,
    /// Percent.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeCell {
    pub dataset: String,
    pub nodes: usize,
    pub edges: u64,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCell {
    pub dataset: String,
    /// `"<layers>L<heads>H"`.
    pub config: String,
    pub variant: AttentionVariant,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub dataset: String,
    pub config: String,
    pub variant: AttentionVariant,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValues {
    pub format_version: u32,
    pub datasets: Vec<String>,
    pub homophily_percent: Vec<HomophilyCell>,
    pub dataset_size: Vec<SizeCell>,
    pub f1_percent: Vec<ScoreCell>,
    pub attention_ratio: Vec<ScoreCell>,
    pub accuracy: Vec<AccuracyCell>,
}

fn find<'a>(cells: &'a [ScoreCell], dataset: &str, config: &str, variant: AttentionVariant) -> Option<&'a ScoreCell> {
    cells.iter().find(|c| c.dataset == dataset && c.config == config && c.variant == variant)
}

impl ReferenceValues {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED_JSON).expect("bundled reference values are valid JSON")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Percent.
    pub fn homophily(&self, dataset: &str, metric: HomophilyMetric) -> Option<f64> {
        self.homophily_percent.iter().find(|c| c.dataset == dataset && c.metric == metric).map(|c| c.value)
    }

    pub fn size(&self, dataset: &str) -> Option<&SizeCell> {
        self.dataset_size.iter().find(|c| c.dataset == dataset)
    }

    pub fn f1(&self, dataset: &str, config: &str, variant: AttentionVariant) -> Option<f64> {
        find(&self.f1_percent, dataset, config, variant).map(|c| c.value)
    }

    pub fn ratio(&self, dataset: &str, config: &str, variant: AttentionVariant) -> Option<f64> {
        find(&self.attention_ratio, dataset, config, variant).map(|c| c.value)
    }

    pub fn accuracy(&self, dataset: &str, config: &str, variant: AttentionVariant) -> Option<(f64, f64)> {
        self.accuracy
            .iter()
            .find(|c| c.dataset == dataset && c.config == config && c.variant == variant)
            .map(|c| (c.mean, c.std))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use AttentionVariant::*;

    #[test]
    fn bundled_cells_are_complete() {
        let r = ReferenceValues::bundled();
        assert_eq!(r.format_version, 1);
        assert_eq!(r.datasets.len(), 7);
        assert_eq!(r.homophily_percent.len(), 21);
        assert_eq!(r.f1_percent.len(), 7 * 4 * 2);
        assert_eq!(r.attention_ratio.len(), 7 * 4 * 3);
        // SC only at one head
        assert_eq!(r.accuracy.len(), 7 * (2 * 4 + 2 * 3));
        for d in &r.datasets {
            for m in HomophilyMetric::ALL {
                assert!(r.homophily(d, m).is_some(), "{d} {m:?}");
            }
            assert!(r.size(d).is_some());
        }
    }

    #[test]
    fn spot_values() {
        let r = ReferenceValues::bundled();
        assert_eq!(r.homophily("cora", HomophilyMetric::Node), Some(82.5));
        assert_eq!(r.homophily("texas", HomophilyMetric::Adjusted), Some(-25.9));
        assert_eq!(r.size("squirrel").unwrap().edges, 217073);
        assert_eq!(r.f1("squirrel", "1L1H", DLB), Some(84.11));
        assert_eq!(r.f1("texas", "2L1H", DL), Some(3.69));
        assert_eq!(r.ratio("cornell", "1L1H", DL), Some(1.28));
        assert_eq!(r.accuracy("cora", "1L1H", SC), Some((0.85, 0.01)));
        assert_eq!(r.accuracy("cora", "1L2H", SC), None);
    }
}
