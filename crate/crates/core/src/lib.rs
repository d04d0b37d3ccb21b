//! Graph Transformer attention capture, Attention Graph aggregation and
//! network-science analysis of the learned attention.

pub mod dataset;
pub mod graph;
pub mod homophily;
pub mod rng;
pub mod tensor;
pub mod model;
pub mod train;
pub mod analysis;
pub mod reference;
