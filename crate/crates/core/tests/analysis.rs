mod common;

use attn_graphs::analysis::{
    aggregate_heads, analyze, attention_ratio, column_mass, f1_counts, threshold_to_quasi_adjacency, AnalysisOptions,
    AttentionGraph, RatioMode,
};
use attn_graphs::graph::Graph;
use attn_graphs::model::{AttentionVariant, ModelConfig};
use attn_graphs::rng;
use common::criteria::{self, record_for};
use common::{random_graph, row_stochastic};
use ndarray::Array2;
use proptest::prelude::*;

fn check(c: criteria::Check) -> Result<(), TestCaseError> {
    c.map(|_| ()).map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn layer_product_matches_loops(seed in any::<u64>()) {
        check(criteria::aggregation_oracle(seed))?;
    }

    #[test]
    fn aggregation_keeps_rows_stochastic(seed in any::<u64>()) {
        check(criteria::row_stochastic_closure(seed))?;
    }

    #[test]
    fn bfs_matches_floyd_warshall(n in 1usize..=50, p in 0.0f64..0.3, seed in any::<u64>()) {
        check(criteria::shortest_paths_oracle(n, p, seed))?;
    }

    #[test]
    fn one_pass_pearson_matches_two_pass(n in 2usize..20, seed in any::<u64>()) {
        check(criteria::pearson_oracle(n, seed))?;
    }

    #[test]
    fn threshold_search_matches_scan(n in 1usize..25, seed in any::<u64>()) {
        check(criteria::threshold_oracle(n, seed))?;
    }

    #[test]
    fn threshold_is_monotone(n in 2usize..15, seed in any::<u64>(), a in 0usize..400, b in 0usize..400) {
        let m = row_stochastic(&mut rng::seeded(seed), n);
        let (lo, hi) = (a.min(b), a.max(b));
        // a larger target can only pick an equal or lower threshold
        let q_lo = threshold_to_quasi_adjacency(&m, lo);
        let q_hi = threshold_to_quasi_adjacency(&m, hi);
        prop_assert!(q_hi.threshold <= q_lo.threshold);
        prop_assert!(q_hi.achieved_edges >= q_lo.achieved_edges);
    }

    #[test]
    fn true_positives_are_symmetric(n in 2usize..15, seed in any::<u64>()) {
        let g = random_graph(n, 0.3, 1, 2, seed);
        let h = random_graph(n, 0.3, 1, 2, seed ^ 1);
        let a = f1_counts(&h.adjacency_dense(), &g, true);
        let b = f1_counts(&g.adjacency_dense(), &h, true);
        prop_assert_eq!(a.true_positives, b.true_positives);
        prop_assert_eq!(a.false_positives, b.false_negatives);
        prop_assert!((a.f1_percent() - b.f1_percent()).abs() < 1e-12);
    }

    #[test]
    fn head_average_of_identical_heads_is_identity(n in 1usize..8, k in 1usize..5, seed in any::<u64>()) {
        let m = row_stochastic(&mut rng::seeded(seed), n);
        let avg = aggregate_heads(&vec![m.clone(); k]).unwrap();
        prop_assert!(avg.iter().zip(m.iter()).all(|(a, b)| (a - b).abs() < 1e-15));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn forward_and_aggregate_are_permutation_covariant(n in 5usize..20, seed in any::<u64>()) {
        check(criteria::permutation_covariance(n, seed))?;
    }
}

#[test]
fn attention_validity_on_fifty_nodes() {
    criteria::attention_validity(50, 3).unwrap();
}

#[test]
fn worked_f1_is_fifty() {
    criteria::worked_f1().unwrap();
}

#[test]
fn one_layer_graph_is_the_head_average() {
    let g = random_graph(15, 0.2, 4, 3, 9);
    let cfg = ModelConfig::new(AttentionVariant::DLB, 1, 2, 4, 3).with_d_model(8);
    let rec = record_for(&cfg, &g, 1);
    let ag = AttentionGraph::from_record(&rec, None).unwrap();
    assert_eq!(ag.matrix, aggregate_heads(&rec.matrices[0]).unwrap());
}

#[test]
fn sl_single_layer_ratio_is_exactly_zero() {
    let g = random_graph(30, 0.1, 4, 3, 4);
    let cfg = ModelConfig::new(AttentionVariant::SL, 1, 1, 4, 3).with_d_model(8);
    let ag = AttentionGraph::from_record(&record_for(&cfg, &g, 2), None).unwrap();
    assert_eq!(attention_ratio(&ag.matrix, &g, RatioMode::Entry).unwrap(), 0.0);
    assert_eq!(attention_ratio(&ag.matrix, &g, RatioMode::PerNode).unwrap(), 0.0);
}

#[test]
fn reference_node_has_the_largest_gini() {
    let n = 20;
    let uniform = Array2::from_elem((n, n), 1.0 / n as f64);
    let star = Array2::from_shape_fn((n, n), |(_, j)| if j == 4 { 1.0 } else { 0.0 });
    let u = column_mass(&uniform, 3);
    let s = column_mass(&star, 3);
    assert!(u.gini.abs() < 1e-12);
    assert!(s.gini > u.gini);
    assert_eq!(s.top[0].0, 4);
}

#[test]
fn full_analysis_of_an_untrained_model() {
    let g: Graph = random_graph(40, 0.1, 6, 3, 21).with_name("toy");
    for (v, l, h) in criteria::variant_configs() {
        let cfg = ModelConfig::new(v, l, h, 6, 3).with_d_model(8);
        let rec = record_for(&cfg, &g, 0).with_seed(0);
        let a = analyze(&rec, &g, None, &AnalysisOptions::default()).unwrap();
        let r = &a.report;
        assert_eq!(r.provenance.dataset.as_deref(), Some("toy"));
        assert_eq!(r.target_edges, g.directed_edge_count());
        assert_eq!(r.head_correlations.len(), l * h * (h - 1) / 2);
        assert_eq!(r.layer_correlations.len(), l * (l - 1) / 2);
        if v.is_learned() {
            let mass: f64 = r.column_mass.mass.iter().sum();
            assert!((mass - 40.0).abs() < 1e-4, "{v} {l}L{h}H total column mass {mass}");
        }
        let hop_total: u64 = r.hop_distribution.iter().map(|b| b.count).sum();
        assert_eq!(hop_total, 40 * 40);
        if v == AttentionVariant::SL && l == 1 {
            assert_eq!(r.attention_ratio, Some(0.0));
        }
    }
}
