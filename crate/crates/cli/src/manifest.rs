//! Experiment manifests: which cells to run, on which seeds, with which
//! settings.
//!
//! ```toml
//! data_dir = "data"          # <data_dir>/<dataset>.agrf
//! out = "out"
//! seeds = [0, 1, 2]
//! datasets = ["cora", "texas"]
//! variants = ["SL", "DL"]     # default: all four
//! configs = ["1L1H", "2L2H"]  # default: 1L1H 1L2H 2L1H 2L2H
//!
//! [[cell]]                    # extra cells, appended to the grid
//! dataset = "cora"
//! variant = "DLB"
//! config = "1L2H"
//!
//! [model]
//! d_model = 128
//!
//! [train]
//! max_epochs = 500
//!
//! [analysis]
//! seeds = "first"             # or "all"
//! f1_include_diagonal = true
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use attn_graphs::analysis::AnalysisOptions;
use attn_graphs::graph::Graph;
use attn_graphs::model::{Activation, AttentionVariant, ModelConfig, NormPlacement};
use attn_graphs::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_CONFIGS: [&str; 4] = ["1L1H", "1L2H", "2L1H", "2L2H"];

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse manifest {path}: {source}")]
    Parse { path: PathBuf, source: Box<toml::de::Error> },
    #[error("invalid manifest: {0}")]
    Invalid(String),
}

/// `<layers>L<heads>H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Shape {
    pub layers: usize,
    pub heads: usize,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}L{}H", self.layers, self.heads)
    }
}

impl FromStr for Shape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("bad configuration `{s}`, expected e.g. 2L1H");
        let upper = s.to_ascii_uppercase();
        let (l, rest) = upper.split_once('L').ok_or_else(bad)?;
        let h = rest.strip_suffix('H').ok_or_else(bad)?;
        let shape = Shape { layers: l.parse().map_err(|_| bad())?, heads: h.parse().map_err(|_| bad())? };
        if shape.layers == 0 || shape.heads == 0 {
            return Err(bad());
        }
        Ok(shape)
    }
}

impl Serialize for Shape {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Shape {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// One (dataset, variant, shape) grid point.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub dataset: String,
    pub variant: AttentionVariant,
    pub config: Shape,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.dataset, self.variant, self.config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    pub d_model: usize,
    /// Defaults to `4 * d_model`.
    pub ffn_dim: Option<usize>,
    pub norm: NormPlacement,
    pub activation: Activation,
    pub dropout: f64,
    pub dlb_self_bias: f64,
    pub dlb_unreachable_bias: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            d_model: 128,
            ffn_dim: None,
            norm: NormPlacement::Post,
            activation: Activation::Relu,
            dropout: 0.0,
            dlb_self_bias: 1.0,
            dlb_unreachable_bias: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalysisSeeds {
    /// The first seed of the list only.
    #[default]
    First,
    /// Every seed; cell statistics are averaged.
    All,
}

impl FromStr for AnalysisSeeds {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "first" => Ok(Self::First),
            "all" => Ok(Self::All),
            other => Err(format!("unknown seed selection `{other}` (first|all)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisToggles {
    pub seeds: AnalysisSeeds,
    /// Samples per hop bucket in `hops.csv`.
    pub hop_samples_per_bucket: usize,
    /// Entry pairs per matrix pair in `corr.csv`.
    pub corr_samples: usize,
    pub quasi_adjacency_pbm: bool,
    #[serde(flatten)]
    pub options: AnalysisOptions,
}

impl Default for AnalysisToggles {
    fn default() -> Self {
        Self {
            seeds: AnalysisSeeds::First,
            hop_samples_per_bucket: 200,
            corr_samples: 2000,
            quasi_adjacency_pbm: true,
            options: AnalysisOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    data_dir: Option<PathBuf>,
    out: Option<PathBuf>,
    seeds: Option<Vec<u64>>,
    #[serde(default)]
    datasets: Vec<String>,
    variants: Option<Vec<AttentionVariant>>,
    configs: Option<Vec<Shape>>,
    #[serde(default, rename = "cell")]
    cells: Vec<Cell>,
    #[serde(default)]
    model: ModelOptions,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    analysis: AnalysisToggles,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub path: PathBuf,
    /// Hex SHA-256 of the manifest bytes.
    pub sha256: String,
    pub data_dir: PathBuf,
    pub out: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub cells: Vec<Cell>,
    pub model: ModelOptions,
    pub train: TrainConfig,
    pub analysis: AnalysisToggles,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let bytes = std::fs::read(path).map_err(|source| ManifestError::Io { path: path.to_owned(), source })?;
        let text = String::from_utf8(bytes).map_err(|_| ManifestError::Invalid("manifest is not UTF-8".into()))?;
        Self::parse_at(&text, path, path.parent().unwrap_or(Path::new(".")))
    }

    #[cfg(test)]
    pub fn parse(text: &str, base: &Path) -> Result<Self, ManifestError> {
        Self::parse_at(text, Path::new("<inline>"), base)
    }

    fn parse_at(text: &str, path: &Path, base: &Path) -> Result<Self, ManifestError> {
        let file: ManifestFile =
            toml::from_str(text).map_err(|e| ManifestError::Parse { path: path.to_owned(), source: Box::new(e) })?;
        Self::from_file(file, path, base, hex::encode(Sha256::digest(text.as_bytes())))
    }

    fn from_file(file: ManifestFile, path: &Path, base: &Path, sha256: String) -> Result<Self, ManifestError> {
        let variants = file.variants.unwrap_or_else(|| AttentionVariant::ALL.to_vec());
        let configs = file
            .configs
            .unwrap_or_else(|| DEFAULT_CONFIGS.iter().map(|c| c.parse().expect("default shapes parse")).collect());
        let mut cells = Vec::new();
        let mut seen = BTreeSet::new();
        for dataset in &file.datasets {
            for &variant in &variants {
                for &config in &configs {
                    // SC has a single fixed coefficient matrix, so grids skip its multi-head shapes
                    if variant == AttentionVariant::SC && config.heads != 1 {
                        continue;
                    }
                    let cell = Cell { dataset: dataset.clone(), variant, config };
                    if seen.insert(cell.clone()) {
                        cells.push(cell);
                    }
                }
            }
        }
        for cell in file.cells {
            if cell.variant == AttentionVariant::SC && cell.config.heads != 1 {
                return Err(ManifestError::Invalid(format!("cell {cell}: SC takes exactly one head")));
            }
            if seen.insert(cell.clone()) {
                cells.push(cell);
            }
        }
        if cells.is_empty() {
            return Err(ManifestError::Invalid("no cells: list datasets or [[cell]] entries".into()));
        }
        let seeds = file.seeds.unwrap_or_else(|| (0..10).collect());
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let m = Self {
            path: path.to_owned(),
            sha256,
            data_dir: resolve(file.data_dir.unwrap_or_else(|| PathBuf::from("data"))),
            out: file.out.map(resolve),
            seeds,
            cells,
            model: file.model,
            train: file.train,
            analysis: file.analysis,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn set_seeds(&mut self, seeds: Vec<u64>) -> Result<(), ManifestError> {
        self.seeds = seeds;
        self.validate()
    }

    fn validate(&self) -> Result<(), ManifestError> {
        if self.seeds.is_empty() {
            return Err(ManifestError::Invalid("the seed list is empty".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(ManifestError::Invalid("the seed list has duplicates".into()));
        }
        self.train.validate().map_err(|e| ManifestError::Invalid(e.to_string()))?;
        for cell in &self.cells {
            // dimensions are placeholders until the dataset is loaded
            self.model_config(cell, 1, 2).validate().map_err(|e| ManifestError::Invalid(format!("cell {cell}: {e}")))?;
        }
        Ok(())
    }

    pub fn datasets(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.dataset) {
                out.push(c.dataset.clone());
            }
        }
        out
    }

    pub fn dataset_path(&self, name: &str) -> PathBuf {
        self.data_dir.join(format!("{name}.agrf"))
    }

    pub fn model_config(&self, cell: &Cell, input_dim: usize, n_classes: usize) -> ModelConfig {
        let m = &self.model;
        let mut cfg = ModelConfig::new(cell.variant, cell.config.layers, cell.config.heads, input_dim, n_classes)
            .with_d_model(m.d_model);
        if let Some(ffn) = m.ffn_dim {
            cfg.ffn_dim = ffn;
        }
        cfg.norm = m.norm;
        cfg.activation = m.activation;
        cfg.dropout = m.dropout;
        cfg.dlb_self_bias = m.dlb_self_bias;
        cfg.dlb_unreachable_bias = m.dlb_unreachable_bias;
        cfg
    }

    pub fn model_config_for(&self, cell: &Cell, g: &Graph) -> ModelConfig {
        self.model_config(cell, g.feature_dim(), g.n_classes())
    }
}

/// `"0,1,2"` or ranges such as `"0..10"`, comma separated.
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range `{part}`"))?;
            let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range `{part}`"))?;
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|_| format!("bad seed `{part}`"))?);
        }
    }
    if out.is_empty() {
        return Err("empty seed list".into());
    }
    Ok(out)
}
