mod common;

use attn_graphs::model::{Activation, AttentionVariant, ModelConfig, NormPlacement};
use attn_graphs::rng;
use attn_graphs::tensor::Tape;
use common::{gradcheck, model_gradcheck, op_gradchecks, random_graph, random_matrix};
use proptest::prelude::*;

#[test]
fn matmul_5x5_is_tight() {
    let mut r = rng::seeded(5);
    let a = random_matrix(&mut r, 5, 5);
    let b = random_matrix(&mut r, 5, 5);
    let w = random_matrix(&mut r, 5, 5);
    let err = gradcheck(&[a, b], |t: &mut Tape<f64>, v| {
        let y = t.matmul(v[0], v[1]).unwrap();
        let y = t.mul_const(y, std::sync::Arc::new(w.clone())).unwrap();
        t.sum(y)
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn layer_norm_is_tight() {
    for (name, err) in op_gradchecks(17, 6, 5) {
        if name == "layer_norm" {
            assert!(err < 1e-5, "{err}");
        }
    }
}

#[test]
fn cross_entropy_gradient_is_softmax_minus_one_hot() {
    let mut t = Tape::<f64>::new();
    let logits = ndarray::array![[1.0, 2.0, 0.5], [0.0, -1.0, 3.0]];
    let v = t.leaf(logits.clone(), true);
    let l = t.cross_entropy(v, &[1, 2], &[0, 1]).unwrap();
    let g = t.backward(l).unwrap().wrt(v);
    for i in 0..2 {
        let z: f64 = logits.row(i).iter().map(|x| x.exp()).sum();
        for c in 0..3 {
            let hot = if [1, 2][i] == c { 1.0 } else { 0.0 };
            let want = (logits[[i, c]].exp() / z - hot) / 2.0;
            assert!((g[[i, c]] - want).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn every_op_matches_central_differences(seed in 0u64..1000, n in 1usize..6, m in 1usize..6) {
        for (name, err) in op_gradchecks(seed, n, m) {
            prop_assert!(err < 1e-4, "{} at {}x{}: {}", name, n, m, err);
        }
    }
}

#[test]
fn full_model_gradients_all_variants() {
    let g = random_graph(12, 0.3, 4, 3, 21);
    for v in AttentionVariant::ALL {
        let cfg = ModelConfig::new(v, 1, 1, 4, 3).with_d_model(8);
        for (name, err) in model_gradcheck(&cfg, &g, 1) {
            assert!(err < 1e-4, "{v} {name}: {err}");
        }
    }
}

#[test]
fn full_model_gradients_deeper_and_flagged() {
    let g = random_graph(10, 0.3, 4, 3, 22);
    let mut cfg = ModelConfig::new(AttentionVariant::DLB, 2, 2, 4, 3).with_d_model(8);
    cfg.norm = NormPlacement::Pre;
    cfg.activation = Activation::Gelu;
    for (name, err) in model_gradcheck(&cfg, &g, 2) {
        assert!(err < 1e-4, "{name}: {err}");
    }
}
