//! Dataset storage, conversion from upstream dumps, splits and summary statistics.

mod canonical;
pub mod convert;
mod split;
mod stats;

use thiserror::Error;

use crate::graph::GraphError;

pub use canonical::{
    load_canonical, load_jsonl, read_canonical, read_jsonl, save_canonical, save_jsonl,
    write_canonical, write_jsonl, LoadWarning, FORMAT_VERSION, MAGIC,
};
pub use split::{generate_split, generate_split_with, split_sizes, NodeSplit, SplitError};
pub use stats::{dataset_stats, DatasetStats};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: u64, reason: String },
    #[error("unsupported format version {version} at byte {offset}")]
    UnsupportedVersion { offset: u64, version: u32 },
    #[error("file truncated in {section} section at byte {offset}")]
    Truncated { offset: u64, section: &'static str },
    #[error("node id {id} out of range (n = {n}) at byte {offset}")]
    NodeOutOfRange { offset: u64, id: u64, n: u64 },
    #[error("self-loop on node {node} at byte {offset}")]
    SelfLoop { offset: u64, node: u64 },
    #[error("feature count mismatch at byte {offset}: expected {expected} values, found {found}")]
    FeatureCountMismatch { offset: u64, expected: u64, found: u64 },
    #[error("label {label} out of range (K = {k}) at byte {offset}")]
    LabelOutOfRange { offset: u64, label: u64, k: u64 },
    #[error("unexpected trailing data at byte {offset}")]
    TrailingBytes { offset: u64 },
    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: u64, reason: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}
