//! Checks shared by the property tests and the acceptance runner. Each
//! returns `Ok(detail)` on success and `Err(reason)` on the first violation.

use attn_graphs::analysis::{
    aggregate_heads, aggregate_layers, f1_counts, pairwise_correlation, threshold_to_quasi_adjacency,
    threshold_value, AttentionGraph, Correlation, CorrelationDomain, GRID_STEPS,
};
use attn_graphs::graph::{shortest_path_lengths, Graph};
use attn_graphs::model::{build_attention_structure, forward, init_params, AttentionRecord, AttentionVariant, ModelConfig};
use attn_graphs::rng;
use ndarray::Array2;

use super::{floyd_warshall, model_gradcheck, op_gradchecks, pearson_two_pass, random_graph, random_matrix, row_stochastic, triple_loop_product};

pub type Check = Result<String, String>;

pub const CONFIGS: [(usize, usize); 4] = [(1, 1), (1, 2), (2, 1), (2, 2)];

pub fn variant_configs() -> impl Iterator<Item = (AttentionVariant, usize, usize)> {
    AttentionVariant::ALL.into_iter().flat_map(|v| {
        CONFIGS.into_iter().filter(move |&(_, h)| v != AttentionVariant::SC || h == 1).map(move |(l, h)| (v, l, h))
    })
}

pub fn record_for(cfg: &ModelConfig, g: &Graph, seed: u64) -> AttentionRecord {
    let dist = shortest_path_lengths(g);
    let structure = build_attention_structure::<f64>(cfg, g, Some(&dist)).unwrap();
    let params = init_params::<f64>(cfg, seed).unwrap();
    forward(&params, cfg, &structure, g.features()).unwrap().1
}

/// Criterion 1: every op and a 1L1H model of each variant on 12 nodes.
pub fn gradient_fidelity(seed: u64) -> Check {
    let mut worst = ("", 0.0f64);
    for (n, m) in [(4, 3), (6, 5), (7, 2)] {
        for (name, err) in op_gradchecks(seed + n as u64, n, m) {
            if !(err < 1e-4) {
                return Err(format!("op {name} at {n}x{m}: relative error {err:.3e}"));
            }
            if err > worst.1 {
                worst = (name, err);
            }
        }
    }
    let g = random_graph(12, 0.3, 5, 3, seed);
    for v in AttentionVariant::ALL {
        let cfg = ModelConfig::new(v, 1, 1, g.feature_dim(), g.n_classes()).with_d_model(8);
        for (name, err) in model_gradcheck(&cfg, &g, seed) {
            if !(err < 1e-4) {
                return Err(format!("{v} 1L1H parameter {name}: relative error {err:.3e}"));
            }
            worst.1 = worst.1.max(err);
        }
    }
    Ok(format!("worst relative error {:.2e}", worst.1))
}

/// Criterion 2 on one random graph.
pub fn attention_validity(n: usize, seed: u64) -> Check {
    let g = random_graph(n, 0.08, 6, 3, seed);
    let dist = shortest_path_lengths(&g);
    let deg: Vec<f64> = (0..n).map(|i| g.degree(i) as f64).collect();
    let mut worst_row = 0.0f64;
    for (v, l, h) in variant_configs() {
        let cfg = ModelConfig::new(v, l, h, g.feature_dim(), g.n_classes()).with_d_model(16);
        let rec = record_for(&cfg, &g, seed);
        for (li, heads) in rec.matrices.iter().enumerate() {
            for (hi, m) in heads.iter().enumerate() {
                let at = format!("{v} {l}L{h}H layer {li} head {hi}");
                if v.is_learned() {
                    for (i, row) in m.rows().into_iter().enumerate() {
                        let s: f64 = row.iter().map(|&x| x as f64).sum();
                        worst_row = worst_row.max((s - 1.0).abs());
                        if (s - 1.0).abs() > 1e-5 {
                            return Err(format!("{at}: row {i} sums to {s}"));
                        }
                    }
                }
                if v == AttentionVariant::SL {
                    for ((i, j), &x) in m.indexed_iter() {
                        if x != 0.0 && i != j && !g.has_edge(i, j) {
                            return Err(format!("{at}: weight {x} on non-edge ({i}, {j})"));
                        }
                    }
                }
                if v == AttentionVariant::SC {
                    for ((i, j), &x) in m.indexed_iter() {
                        let expect = if g.has_edge(i, j) { (1.0 / (deg[i] * deg[j]).sqrt()) as f32 } else { 0.0 };
                        if x != expect {
                            return Err(format!("{at}: ({i}, {j}) is {x}, expected {expect}"));
                        }
                    }
                }
            }
        }
        if v == AttentionVariant::SL && l == 2 {
            let ag = AttentionGraph::from_record(&rec, None).map_err(|e| e.to_string())?;
            for ((i, j), &x) in ag.matrix.indexed_iter() {
                if x != 0.0 && !matches!(dist.get(i, j), Some(d) if d <= 2) {
                    return Err(format!("SL 2L{h}H aggregate: weight {x} at hop distance {:?}", dist.get(i, j)));
                }
            }
        }
    }
    Ok(format!("max |row sum - 1| = {worst_row:.2e}"))
}

/// Criterion 3a: layer products against explicit loops.
pub fn aggregation_oracle(seed: u64) -> Check {
    let mut r = rng::seeded(seed);
    let mut worst = 0.0f64;
    for n in 3..=10 {
        let layers: Vec<Array2<f64>> = (0..1 + rng::below(&mut r, 3)).map(|_| row_stochastic(&mut r, n)).collect();
        let got = aggregate_layers(&layers).map_err(|e| e.to_string())?;
        let mut want = layers[0].clone();
        for later in &layers[1..] {
            want = triple_loop_product(later, &want);
        }
        let err = (&got - &want).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(err);
        if err > 1e-12 {
            return Err(format!("n = {n}, {} layers: max deviation {err:.3e}", layers.len()));
        }
    }
    Ok(format!("max deviation {worst:.2e}"))
}

/// Criterion 3b: head averaging and layer products keep rows stochastic.
pub fn row_stochastic_closure(seed: u64) -> Check {
    let mut r = rng::seeded(seed);
    let mut worst = 0.0f64;
    for n in 3..=10 {
        let heads = |r: &mut rand_chacha::ChaCha8Rng| (0..1 + rng::below(r, 4)).map(|_| row_stochastic(r, n)).collect::<Vec<_>>();
        let layers = vec![
            aggregate_heads(&heads(&mut r)).map_err(|e| e.to_string())?,
            aggregate_heads(&heads(&mut r)).map_err(|e| e.to_string())?,
        ];
        let agg = aggregate_layers(&layers).map_err(|e| e.to_string())?;
        for m in layers.iter().chain([&agg]) {
            for s in m.sum_axis(ndarray::Axis(1)) {
                worst = worst.max((s - 1.0).abs());
                if (s - 1.0).abs() > 1e-6 {
                    return Err(format!("n = {n}: row sum {s}"));
                }
            }
        }
    }
    Ok(format!("max |row sum - 1| = {worst:.2e}"))
}

pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::seeded(seed), &mut perm);
    perm
}

fn max_deviation(a: &AttentionRecord, b: &AttentionRecord) -> f64 {
    let mut worst = 0.0f64;
    for (la, lb) in a.matrices.iter().zip(&b.matrices) {
        for (ha, hb) in la.iter().zip(lb) {
            for (x, y) in ha.iter().zip(hb) {
                worst = worst.max((x - y).abs() as f64);
            }
        }
    }
    worst
}

/// Criterion 3c: relabelling nodes relabels attention and its aggregate.
pub fn permutation_covariance(n: usize, seed: u64) -> Check {
    let g = random_graph(n, 0.15, 4, 3, seed);
    let perm = random_permutation(n, seed ^ 0x5eed);
    let pg = g.permuted(&perm).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (v, l, h) in variant_configs() {
        let cfg = ModelConfig::new(v, l, h, g.feature_dim(), g.n_classes()).with_d_model(8);
        let rec = record_for(&cfg, &g, seed);
        let prec = record_for(&cfg, &pg, seed);
        let dev = max_deviation(&rec.permuted(&perm), &prec);
        let ag = AttentionGraph::from_record(&rec, None).map_err(|e| e.to_string())?.matrix;
        let pag = AttentionGraph::from_record(&prec, None).map_err(|e| e.to_string())?.matrix;
        let mut agg_dev = 0.0f64;
        for ((i, j), &x) in ag.indexed_iter() {
            agg_dev = agg_dev.max((x - pag[[perm[i], perm[j]]]).abs());
        }
        worst = worst.max(dev).max(agg_dev);
        if dev > 1e-5 || agg_dev > 1e-5 {
            return Err(format!("{v} {l}L{h}H: layer deviation {dev:.3e}, aggregate deviation {agg_dev:.3e}"));
        }
    }
    Ok(format!("max deviation {worst:.2e}"))
}

/// Criterion 4a.
pub fn shortest_paths_oracle(n: usize, p: f64, seed: u64) -> Check {
    let g = random_graph(n, p, 1, 2, seed);
    let bfs = shortest_path_lengths(&g);
    let fw = floyd_warshall(&g);
    for i in 0..n {
        for j in 0..n {
            if bfs.get(i, j) != fw[i][j] {
                return Err(format!("n = {n}, ({i}, {j}): BFS {:?}, Floyd-Warshall {:?}", bfs.get(i, j), fw[i][j]));
            }
        }
    }
    Ok(format!("{} pairs", n * n))
}

/// Criterion 4b over both domains.
pub fn pearson_oracle(n: usize, seed: u64) -> Check {
    let mut r = rng::seeded(seed);
    let mut x = random_matrix(&mut r, n, n);
    let mut y = random_matrix(&mut r, n, n).mapv(|v| v * 0.3) + &x;
    for ((i, j), v) in x.indexed_iter_mut() {
        if (i + 2 * j) % 3 == 0 {
            *v = 0.0;
            if (i + j) % 2 == 0 {
                y[[i, j]] = 0.0;
            }
        }
    }
    let mut worst = 0.0f64;
    for domain in [CorrelationDomain::All, CorrelationDomain::UnionSupport] {
        let (xs, ys): (Vec<f64>, Vec<f64>) = x
            .iter()
            .zip(y.iter())
            .filter(|&(&a, &b)| domain == CorrelationDomain::All || a != 0.0 || b != 0.0)
            .map(|(&a, &b)| (a, b))
            .unzip();
        let want = pearson_two_pass(&xs, &ys);
        let got = pairwise_correlation(&x, &y, domain).map_err(|e| e.to_string())?;
        match (got, want) {
            (Correlation::Value(a), Some(b)) => {
                worst = worst.max((a - b).abs());
                if (a - b).abs() > 1e-12 {
                    return Err(format!("{domain:?}: one-pass {a}, two-pass {b}"));
                }
            }
            (Correlation::NoVariance | Correlation::TooFewPairs, None) => {}
            (a, b) => return Err(format!("{domain:?}: one-pass {a:?}, two-pass {b:?}")),
        }
    }
    Ok(format!("max deviation {worst:.2e}"))
}

/// Threshold choice by scanning every grid point and recounting.
pub fn exhaustive_threshold(m: &Array2<f64>, target: usize) -> (f64, usize) {
    let mut best: Option<(f64, usize)> = None;
    for k in 0..=GRID_STEPS {
        let t = threshold_value(k);
        let count = m.iter().filter(|&&v| v > t).count();
        if best.map_or(true, |(_, c)| count.abs_diff(target) < c.abs_diff(target)) {
            best = Some((t, count));
        }
    }
    best.unwrap()
}

/// Criterion 4c on one random matrix.
pub fn threshold_oracle(n: usize, seed: u64) -> Check {
    let mut r = rng::seeded(seed);
    let mut m = row_stochastic(&mut r, n);
    // exact grid values exercise the strict comparison
    for k in 0..n {
        m[[k, (k * 3) % n]] = threshold_value(rng::below(&mut r, GRID_STEPS + 1));
    }
    let target = rng::below(&mut r, n * n + 1);
    let q = threshold_to_quasi_adjacency(&m, target);
    let (t, count) = exhaustive_threshold(&m, target);
    if q.threshold != t || q.achieved_edges != count {
        return Err(format!("n = {n}, target {target}: search ({}, {}), scan ({t}, {count})", q.threshold, q.achieved_edges));
    }
    if q.binary != m.mapv(|v| v > t) {
        return Err(format!("n = {n}: binary matrix disagrees with the threshold"));
    }
    Ok(format!("threshold {t}"))
}

/// Criterion 4d.
pub fn worked_f1() -> Check {
    let g = Graph::from_edges(3, &[(0, 1), (1, 2)], Array2::zeros((3, 1)), vec![0, 1, 0], 2).map_err(|e| e.to_string())?;
    let mut q = Array2::from_elem((3, 3), false);
    for ij in [(0, 1), (1, 0), (0, 2), (2, 0)] {
        q[ij] = true;
    }
    let f1 = f1_counts(&q, &g, true).f1_percent();
    if f1 == 50.0 {
        Ok("F1 = 50".into())
    } else {
        Err(format!("F1 = {f1}"))
    }
}
