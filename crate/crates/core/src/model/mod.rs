//! The four-variant graph Transformer encoder with attention capture.

mod binio;
mod checkpoint;
mod forward;
mod record;
mod structure;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::tensor::{ParamStore, Scalar, TensorError};

pub use binio::FileError;
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use forward::{forward, forward_on_tape, infer, DropoutMasks, Forward};
pub use record::{load_attention, read_attention, save_attention, write_attention, AttentionRecord};
pub use structure::{build_attention_structure, AttentionStructure, StructureKind};

/// How attention between nodes is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttentionVariant {
    /// Fixed `1/√(d_i d_j)` coefficients on edges; nothing is learned.
    SC,
    /// Softmax attention restricted to neighbors and self.
    SL,
    /// Dense softmax attention with an inverse-distance additive bias.
    DLB,
    /// Dense softmax attention without structural input.
    DL,
}

impl AttentionVariant {
    pub const ALL: [Self; 4] = [Self::SC, Self::SL, Self::DLB, Self::DL];

    pub fn is_learned(self) -> bool {
        self != Self::SC
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SC => "SC",
            Self::SL => "SL",
            Self::DLB => "DLB",
            Self::DL => "DL",
        }
    }
}

impl fmt::Display for AttentionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttentionVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "SC" => Ok(Self::SC),
            "SL" => Ok(Self::SL),
            "DLB" => Ok(Self::DLB),
            "DL" => Ok(Self::DL),
            _ => Err(format!("unknown attention variant `{s}` (SC|SL|DLB|DL)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormPlacement {
    #[default]
    Post,
    Pre,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Gelu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: AttentionVariant,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub n_classes: usize,
    pub input_dim: usize,
    pub ffn_dim: usize,
    pub norm: NormPlacement,
    pub activation: Activation,
    pub dropout: f64,
    /// DLB bias on the diagonal.
    pub dlb_self_bias: f64,
    /// DLB bias between mutually unreachable nodes.
    pub dlb_unreachable_bias: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("graph does not match the model: {0}")]
    Mismatch(String),
    #[error("node {0} has no attendable target")]
    NoAttendableTarget(usize),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl ModelConfig {
    /// Defaults for everything but the variant, depth, width of heads and the
    /// data-dependent dimensions.
    pub fn new(variant: AttentionVariant, n_layers: usize, n_heads: usize, input_dim: usize, n_classes: usize) -> Self {
        Self {
            variant,
            n_layers,
            n_heads,
            d_model: 128,
            n_classes,
            input_dim,
            ffn_dim: 512,
            norm: NormPlacement::Post,
            activation: Activation::Relu,
            dropout: 0.0,
            dlb_self_bias: 1.0,
            dlb_unreachable_bias: 0.0,
        }
    }

    pub fn with_d_model(mut self, d_model: usize) -> Self {
        self.d_model = d_model;
        self.ffn_dim = 4 * d_model;
        self
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_owned()));
        if self.n_layers == 0 || self.n_heads == 0 {
            return bad("n_layers and n_heads must be at least 1");
        }
        if self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return bad("d_model must be a positive multiple of n_heads");
        }
        if self.variant == AttentionVariant::SC && self.n_heads != 1 {
            return bad("SC uses exactly one head");
        }
        if self.n_classes < 2 || self.input_dim == 0 || self.ffn_dim == 0 {
            return bad("n_classes must be at least 2 and input_dim, ffn_dim positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !self.dlb_self_bias.is_finite() || !self.dlb_unreachable_bias.is_finite() {
            return bad("DLB biases must be finite");
        }
        Ok(())
    }

    /// `"<N_L>L<N_H>H"`.
    pub fn shape_tag(&self) -> String {
        format!("{}L{}H", self.n_layers, self.n_heads)
    }
}

pub(crate) fn layer_name(layer: usize, part: &str) -> String {
    format!("layer{layer:02}.{part}")
}

fn glorot(rng: &mut impl rand_core::RngCore, rows: usize, cols: usize) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || (2.0 * rng::unit_f64(rng) - 1.0) * bound)
}

/// Glorot-uniform weights, zero biases, unit norm scales. Values are drawn in
/// `f64` and cast, so `f32` and `f64` models from one seed agree up to rounding.
pub fn init_params<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<ParamStore<T>, ModelError> {
    cfg.validate()?;
    let mut r = rng::stream(seed, "init");
    let mut p = ParamStore::new();
    let dm = cfg.d_model;
    let cast = |a: Array2<f64>| a.mapv(T::of);
    let add = |p: &mut ParamStore<T>, name: String, a: Array2<f64>| p.insert(name, cast(a));

    add(&mut p, "input.weight".into(), glorot(&mut r, cfg.input_dim, dm))?;
    add(&mut p, "input.bias".into(), Array2::zeros((1, dm)))?;
    for l in 0..cfg.n_layers {
        if cfg.variant.is_learned() {
            for w in ["wq", "wk"] {
                add(&mut p, layer_name(l, &format!("attn.{w}")), glorot(&mut r, dm, dm))?;
            }
            add(&mut p, layer_name(l, "attn.bq"), Array2::zeros((1, dm)))?;
        }
        add(&mut p, layer_name(l, "attn.wv"), glorot(&mut r, dm, dm))?;
        add(&mut p, layer_name(l, "attn.bv"), Array2::zeros((1, dm)))?;
        add(&mut p, layer_name(l, "attn.wo"), glorot(&mut r, dm, dm))?;
        add(&mut p, layer_name(l, "attn.bo"), Array2::zeros((1, dm)))?;
        add(&mut p, layer_name(l, "ffn.w1"), glorot(&mut r, dm, cfg.ffn_dim))?;
        add(&mut p, layer_name(l, "ffn.b1"), Array2::zeros((1, cfg.ffn_dim)))?;
        add(&mut p, layer_name(l, "ffn.w2"), glorot(&mut r, cfg.ffn_dim, dm))?;
        add(&mut p, layer_name(l, "ffn.b2"), Array2::zeros((1, dm)))?;
        for norm in ["norm1", "norm2"] {
            add(&mut p, layer_name(l, &format!("{norm}.gamma")), Array2::ones((1, dm)))?;
            add(&mut p, layer_name(l, &format!("{norm}.beta")), Array2::zeros((1, dm)))?;
        }
    }
    if cfg.norm == NormPlacement::Pre {
        add(&mut p, "final_norm.gamma".into(), Array2::ones((1, dm)))?;
        add(&mut p, "final_norm.beta".into(), Array2::zeros((1, dm)))?;
    }
    add(&mut p, "readout.weight".into(), glorot(&mut r, dm, cfg.n_classes))?;
    add(&mut p, "readout.bias".into(), Array2::zeros((1, cfg.n_classes)))?;
    Ok(p)
}

/// Casts every parameter to another scalar type.
pub fn cast_params<A: Scalar, B: Scalar>(p: &ParamStore<A>) -> ParamStore<B> {
    let mut out = ParamStore::new();
    for (name, v) in p.iter() {
        out.insert(name, v.mapv(|x| B::of(x.as_f64()))).expect("names are already unique");
    }
    out
}
