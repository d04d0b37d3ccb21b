use std::sync::Arc;

use ndarray::Array2;
use rand_core::RngCore;

use super::{layer_name, Activation, AttentionRecord, AttentionStructure, ModelConfig, ModelError, NormPlacement, StructureKind};
use crate::rng;
use crate::tensor::{Bound, ParamStore, Scalar, Tape, Var};

/// Inverted-dropout mask source used during training.
pub struct DropoutMasks<'a, R: RngCore> {
    rng: &'a mut R,
    p: f64,
}

impl<'a, R: RngCore> DropoutMasks<'a, R> {
    pub fn new(rng: &'a mut R, p: f64) -> Self {
        Self { rng, p }
    }

    fn apply<T: Scalar>(&mut self, tape: &mut Tape<T>, x: Var) -> Result<Var, ModelError> {
        if self.p <= 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - self.p));
        let p = self.p;
        let rng = &mut *self.rng;
        let mask = Array2::from_shape_simple_fn(tape.shape(x), || {
            if rng::unit_f64(rng) < p {
                T::zero()
            } else {
                keep
            }
        });
        Ok(tape.mul_const(x, Arc::new(mask))?)
    }
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Var,
    /// `[layer][head]`, post-softmax and before any dropout.
    pub attention: Vec<Vec<Var>>,
}

fn dropout<T: Scalar, R: RngCore>(
    masks: &mut Option<DropoutMasks<'_, R>>,
    tape: &mut Tape<T>,
    x: Var,
) -> Result<Var, ModelError> {
    match masks {
        Some(m) => m.apply(tape, x),
        None => Ok(x),
    }
}

fn linear<T: Scalar>(tape: &mut Tape<T>, x: Var, w: Var, b: Var) -> Result<Var, ModelError> {
    let y = tape.matmul(x, w)?;
    Ok(tape.add_row(y, b)?)
}

fn norm<T: Scalar>(tape: &mut Tape<T>, p: &Bound, x: Var, prefix: &str) -> Result<Var, ModelError> {
    let gamma = p.var(&format!("{prefix}.gamma"))?;
    let beta = p.var(&format!("{prefix}.beta"))?;
    Ok(tape.layer_norm(x, gamma, beta)?)
}

/// Multi-head attention sub-block; returns the projected output and the
/// per-head attention matrices.
fn attention_block<T: Scalar, R: RngCore>(
    tape: &mut Tape<T>,
    p: &Bound,
    cfg: &ModelConfig,
    structure: &AttentionStructure<T>,
    l: usize,
    h: Var,
    masks: &mut Option<DropoutMasks<'_, R>>,
) -> Result<(Var, Vec<Var>), ModelError> {
    let name = |s: &str| layer_name(l, s);
    let v = linear(tape, h, p.var(&name("attn.wv"))?, p.var(&name("attn.bv"))?)?;
    let (mixed, heads) = match &structure.kind {
        StructureKind::Constant(c) => {
            let a = tape.constant((**c).clone());
            (tape.const_matmul(c.clone(), v)?, vec![a])
        }
        StructureKind::Offset(offset) => {
            let q = linear(tape, h, p.var(&name("attn.wq"))?, p.var(&name("attn.bq"))?)?;
            // A key bias would add q_i·b to a whole score row and cancel in
            // the softmax, so keys carry no bias.
            let k = tape.matmul(h, p.var(&name("attn.wk"))?)?;
            let dh = cfg.d_head();
            let scale = T::of(1.0 / (dh as f64).sqrt());
            let mut outs = Vec::with_capacity(cfg.n_heads);
            let mut heads = Vec::with_capacity(cfg.n_heads);
            for head in 0..cfg.n_heads {
                let qh = tape.slice_cols(q, head * dh, dh)?;
                let kh = tape.slice_cols(k, head * dh, dh)?;
                let vh = tape.slice_cols(v, head * dh, dh)?;
                let scores = tape.matmul_nt(qh, kh)?;
                // Each row is normalised over exp(s_ik + b_ik), the bias
                // entering per term.
                let a = tape.softmax(scores, scale, offset)?;
                heads.push(a);
                let a = dropout(masks, tape, a)?;
                outs.push(tape.matmul(a, vh)?);
            }
            let cat = if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs)? };
            (cat, heads)
        }
    };
    let out = linear(tape, mixed, p.var(&name("attn.wo"))?, p.var(&name("attn.bo"))?)?;
    Ok((out, heads))
}

fn ffn_block<T: Scalar, R: RngCore>(
    tape: &mut Tape<T>,
    p: &Bound,
    cfg: &ModelConfig,
    l: usize,
    h: Var,
    masks: &mut Option<DropoutMasks<'_, R>>,
) -> Result<Var, ModelError> {
    let name = |s: &str| layer_name(l, s);
    let inner = linear(tape, h, p.var(&name("ffn.w1"))?, p.var(&name("ffn.b1"))?)?;
    let inner = match cfg.activation {
        Activation::Relu => tape.relu(inner),
        Activation::Gelu => tape.gelu(inner),
    };
    let inner = dropout(masks, tape, inner)?;
    linear(tape, inner, p.var(&name("ffn.w2"))?, p.var(&name("ffn.b2"))?)
}

/// Records the full encoder on `tape`. `x` is the `n × input_dim` feature
/// matrix; passing dropout masks switches on training-mode dropout.
pub fn forward_on_tape<T: Scalar, R: RngCore>(
    tape: &mut Tape<T>,
    p: &Bound,
    cfg: &ModelConfig,
    structure: &AttentionStructure<T>,
    x: Var,
    mut masks: Option<DropoutMasks<'_, R>>,
) -> Result<Forward, ModelError> {
    let (n, d) = tape.shape(x);
    if d != cfg.input_dim {
        return Err(ModelError::Mismatch(format!("features have {d} columns, model expects {}", cfg.input_dim)));
    }
    if structure.n != n || structure.variant != cfg.variant {
        return Err(ModelError::Mismatch(format!(
            "structure is {} on {} nodes, input is {} on {n} nodes",
            structure.variant, structure.n, cfg.variant
        )));
    }
    let mut h = linear(tape, x, p.var("input.weight")?, p.var("input.bias")?)?;
    let mut attention = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let n1 = layer_name(l, "norm1");
        let n2 = layer_name(l, "norm2");
        match cfg.norm {
            NormPlacement::Post => {
                let (a, heads) = attention_block(tape, p, cfg, structure, l, h, &mut masks)?;
                let a = dropout(&mut masks, tape, a)?;
                let sum = tape.add(h, a)?;
                h = norm(tape, p, sum, &n1)?;
                let f = ffn_block(tape, p, cfg, l, h, &mut masks)?;
                let f = dropout(&mut masks, tape, f)?;
                let sum = tape.add(h, f)?;
                h = norm(tape, p, sum, &n2)?;
                attention.push(heads);
            }
            NormPlacement::Pre => {
                let hn = norm(tape, p, h, &n1)?;
                let (a, heads) = attention_block(tape, p, cfg, structure, l, hn, &mut masks)?;
                let a = dropout(&mut masks, tape, a)?;
                h = tape.add(h, a)?;
                let hn = norm(tape, p, h, &n2)?;
                let f = ffn_block(tape, p, cfg, l, hn, &mut masks)?;
                let f = dropout(&mut masks, tape, f)?;
                h = tape.add(h, f)?;
                attention.push(heads);
            }
        }
    }
    if cfg.norm == NormPlacement::Pre {
        h = norm(tape, p, h, "final_norm")?;
    }
    let logits = linear(tape, h, p.var("readout.weight")?, p.var("readout.bias")?)?;
    Ok(Forward { logits, attention })
}

/// Evaluation-mode pass: logits and the attention record, no dropout.
pub fn forward<T: Scalar>(
    params: &ParamStore<T>,
    cfg: &ModelConfig,
    structure: &AttentionStructure<T>,
    features: &Array2<f32>,
) -> Result<(Array2<T>, AttentionRecord), ModelError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let x = tape.constant(features.mapv(|v| T::of(v as f64)));
    let out = forward_on_tape::<T, rand_chacha::ChaCha8Rng>(&mut tape, &bound, cfg, structure, x, None)?;
    let record = AttentionRecord::from_tape(&tape, &out, cfg);
    Ok((tape.value(out.logits).clone(), record))
}

/// Logits only.
pub fn infer<T: Scalar>(
    params: &ParamStore<T>,
    cfg: &ModelConfig,
    structure: &AttentionStructure<T>,
    features: &Array2<f32>,
) -> Result<Array2<T>, ModelError> {
    forward(params, cfg, structure, features).map(|(logits, _)| logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{shortest_path_lengths, Graph};
    use crate::model::{build_attention_structure, init_params, AttentionVariant};
    use crate::tensor::ScoreOffset;

    fn random_graph(n: usize, seed: u64) -> Graph {
        let mut r = rng::seeded(seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng::unit_f64(&mut r) < 0.3 {
                    edges.push((i as u32, j as u32));
                }
            }
        }
        let features = Array2::from_shape_simple_fn((n, 5), || rng::unit_f64(&mut r) as f32);
        let labels = (0..n).map(|i| (i % 3) as u32).collect();
        Graph::from_edges(n, &edges, features, labels, 3).unwrap()
    }

    fn small(v: AttentionVariant, layers: usize, heads: usize) -> ModelConfig {
        ModelConfig::new(v, layers, heads, 5, 3).with_d_model(8)
    }

    fn run(cfg: &ModelConfig, g: &Graph) -> (Array2<f64>, AttentionRecord) {
        let dist = shortest_path_lengths(g);
        let s = build_attention_structure::<f64>(cfg, g, Some(&dist)).unwrap();
        let p = init_params::<f64>(cfg, 3).unwrap();
        forward(&p, cfg, &s, g.features()).unwrap()
    }

    #[test]
    fn logits_shape_and_row_stochastic_attention() {
        let g = random_graph(9, 1);
        for v in AttentionVariant::ALL {
            let heads = if v == AttentionVariant::SC { 1 } else { 2 };
            let cfg = small(v, 2, heads);
            let (logits, rec) = run(&cfg, &g);
            assert_eq!(logits.dim(), (9, 3));
            assert_eq!(rec.matrices.len(), 2);
            assert_eq!(rec.matrices[0].len(), heads);
            if v.is_learned() {
                for m in rec.matrices.iter().flatten() {
                    for row in m.rows() {
                        assert!((row.iter().map(|&x| x as f64).sum::<f64>() - 1.0).abs() < 1e-5);
                    }
                }
            }
        }
    }

    #[test]
    fn single_node_attends_to_itself() {
        let g = Graph::from_edges(1, &[], Array2::ones((1, 5)), vec![0], 3).unwrap();
        for v in [AttentionVariant::SL, AttentionVariant::DLB, AttentionVariant::DL] {
            let (_, rec) = run(&small(v, 1, 1), &g);
            assert_eq!(rec.matrices[0][0][[0, 0]], 1.0);
        }
    }

    #[test]
    fn zero_query_key_weights_give_uniform_dl_attention() {
        let g = random_graph(6, 2);
        let cfg = small(AttentionVariant::DL, 1, 1);
        let mut p = init_params::<f64>(&cfg, 0).unwrap();
        p.get_mut("layer00.attn.wq").unwrap().fill(0.0);
        p.get_mut("layer00.attn.wk").unwrap().fill(0.0);
        let s = AttentionStructure::dense_unbiased(6);
        let (_, rec) = forward(&p, &cfg, &s, g.features()).unwrap();
        assert!(rec.matrices[0][0].iter().all(|&a| (a - 1.0 / 6.0).abs() < 1e-7));
    }

    /// Dense masked-softmax attention computed directly from the weights.
    fn reference_sl_attention(g: &Graph, p: &ParamStore<f64>, d_model: usize) -> Array2<f64> {
        let x = g.features().mapv(|v| v as f64);
        let h = x.dot(p.get("input.weight").unwrap()) + p.get("input.bias").unwrap();
        let q = h.dot(p.get("layer00.attn.wq").unwrap()) + p.get("layer00.attn.bq").unwrap();
        let k = h.dot(p.get("layer00.attn.wk").unwrap());
        let n = g.n();
        let mut a = Array2::zeros((n, n));
        for i in 0..n {
            let allowed: Vec<usize> = (0..n).filter(|&j| j == i || g.has_edge(i, j)).collect();
            let s: Vec<f64> = allowed.iter().map(|&j| q.row(i).dot(&k.row(j)) / (d_model as f64).sqrt()).collect();
            let z: f64 = s.iter().map(|v| v.exp()).sum();
            for (&j, v) in allowed.iter().zip(&s) {
                a[[i, j]] = v.exp() / z;
            }
        }
        a
    }

    #[test]
    fn sl_attention_matches_dense_reference() {
        let g = random_graph(6, 5);
        let cfg = small(AttentionVariant::SL, 1, 1);
        let p = init_params::<f64>(&cfg, 11).unwrap();
        let s = build_attention_structure::<f64>(&cfg, &g, None).unwrap();
        let (_, rec) = forward(&p, &cfg, &s, g.features()).unwrap();
        let want = reference_sl_attention(&g, &p, 8);
        for i in 0..6 {
            for j in 0..6 {
                let got = rec.matrices[0][0][[i, j]] as f64;
                if i != j && !g.has_edge(i, j) {
                    assert_eq!(got, 0.0);
                }
                assert!((got - want[[i, j]]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sc_attention_ignores_weights() {
        let g = random_graph(7, 3);
        let cfg = small(AttentionVariant::SC, 1, 1);
        let s = build_attention_structure::<f64>(&cfg, &g, None).unwrap();
        let (_, a) = forward(&init_params::<f64>(&cfg, 1).unwrap(), &cfg, &s, g.features()).unwrap();
        let (_, b) = forward(&init_params::<f64>(&cfg, 2).unwrap(), &cfg, &s, g.features()).unwrap();
        assert_eq!(a.matrices, b.matrices);
        let c = s.constant().unwrap().mapv(|v| v as f32);
        assert_eq!(a.matrices[0][0], c);
    }

    #[test]
    fn dl_never_reads_adjacency() {
        let g = random_graph(8, 4);
        let other = random_graph(8, 40);
        let rewired = g.with_edges(&other.edges().collect::<Vec<_>>()).unwrap();
        let cfg = small(AttentionVariant::DL, 2, 2);
        let (la, ra) = run(&cfg, &g);
        let (lb, rb) = run(&cfg, &rewired);
        assert_eq!(la, lb);
        assert_eq!(ra.matrices, rb.matrices);
    }

    #[test]
    fn raising_one_bias_entry_is_monotone() {
        let g = random_graph(6, 6);
        let cfg = small(AttentionVariant::DLB, 1, 1);
        let p = init_params::<f64>(&cfg, 2).unwrap();
        let dist = shortest_path_lengths(&g);
        let s = build_attention_structure::<f64>(&cfg, &g, Some(&dist)).unwrap();
        let StructureKind::Offset(ScoreOffset::Bias(b)) = &s.kind else { panic!("DLB is a bias") };
        let mut raised = (**b).clone();
        raised[[2, 4]] += 0.5;
        let s2 = AttentionStructure { kind: StructureKind::Offset(ScoreOffset::Bias(Arc::new(raised))), ..s.clone() };
        let (_, a) = forward(&p, &cfg, &s, g.features()).unwrap();
        let (_, b) = forward(&p, &cfg, &s2, g.features()).unwrap();
        let (a, b) = (&a.matrices[0][0], &b.matrices[0][0]);
        assert!(b[[2, 4]] > a[[2, 4]]);
        for j in (0..6).filter(|&j| j != 4) {
            assert!(b[[2, j]] <= a[[2, j]]);
        }
    }
}
