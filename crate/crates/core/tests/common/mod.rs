#![allow(dead_code)]

pub mod criteria;

use attn_graphs::graph::Graph;
use attn_graphs::rng;
use attn_graphs::tensor::{Tape, Var};
use ndarray::Array2;

pub const FD_EPS: f64 = 1e-5;

pub fn random_matrix(r: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || 2.0 * rng::unit_f64(r) - 1.0)
}

pub fn row_stochastic(r: &mut rand_chacha::ChaCha8Rng, n: usize) -> Array2<f64> {
    let mut m = Array2::from_shape_simple_fn((n, n), || rng::unit_f64(r) + 1e-3);
    for mut row in m.rows_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    m
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = (a - b).mapv(|v| v * v).sum().sqrt();
    let scale = a.mapv(|v| v * v).sum().sqrt().max(b.mapv(|v| v * v).sum().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Compares tape gradients with central differences for every input.
/// `build` records a scalar loss from the input leaves. Returns the worst
/// relative error over inputs.
pub fn gradcheck(inputs: &[Array2<f64>], build: impl Fn(&mut Tape<f64>, &[Var]) -> Var) -> f64 {
    let loss_at = |values: &[Array2<f64>]| {
        let mut t = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| t.leaf(v.clone(), true)).collect();
        let l = build(&mut t, &vars);
        t.value(l)[[0, 0]]
    };
    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| t.leaf(v.clone(), true)).collect();
    let l = build(&mut t, &vars);
    let grads = t.backward(l).expect("scalar loss");

    let mut worst = 0.0f64;
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var);
        let mut numeric = Array2::zeros(inputs[k].dim());
        let mut probe = inputs.to_vec();
        for idx in 0..inputs[k].len() {
            let ij = (idx / inputs[k].ncols(), idx % inputs[k].ncols());
            let x = inputs[k][ij];
            probe[k][ij] = x + FD_EPS;
            let up = loss_at(&probe);
            probe[k][ij] = x - FD_EPS;
            let down = loss_at(&probe);
            probe[k][ij] = x;
            numeric[ij] = (up - down) / (2.0 * FD_EPS);
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

/// Erdős–Rényi graph with random features and `k` classes.
pub fn random_graph(n: usize, p: f64, d: usize, k: usize, seed: u64) -> Graph {
    let mut r = rng::seeded(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng::unit_f64(&mut r) < p {
                edges.push((i as u32, j as u32));
            }
        }
    }
    let features = Array2::from_shape_simple_fn((n, d), || rng::unit_f64(&mut r) as f32);
    let labels = (0..n).map(|_| rng::below(&mut r, k) as u32).collect();
    Graph::from_edges(n, &edges, features, labels, k).unwrap()
}

/// Floyd–Warshall over the dense adjacency; `None` for unreachable pairs.
pub fn floyd_warshall(g: &Graph) -> Vec<Vec<Option<u32>>> {
    let n = g.n();
    let inf = u32::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for &j in g.neighbors(i) {
            d[i][j as usize] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d.into_iter().map(|row| row.into_iter().map(|v| (v < inf).then_some(v)).collect()).collect()
}

/// Two-pass Pearson correlation.
pub fn pearson_two_pass(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// `c[i][k] = Σ_j a[i][j] · b[j][k]` by explicit loops.
pub fn triple_loop_product(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut c = Array2::zeros((n, b.ncols()));
    for i in 0..n {
        for k in 0..b.ncols() {
            let mut s = 0.0;
            for j in 0..a.ncols() {
                s += a[[i, j]] * b[[j, k]];
            }
            c[[i, k]] = s;
        }
    }
    c
}

/// Per-parameter relative error between backprop and central differences for
/// the cross-entropy loss of a full encoder over all nodes.
pub fn model_gradcheck(cfg: &attn_graphs::model::ModelConfig, g: &Graph, seed: u64) -> Vec<(String, f64)> {
    use attn_graphs::graph::shortest_path_lengths;
    use attn_graphs::model::{build_attention_structure, forward_on_tape, init_params};
    use attn_graphs::tensor::ParamStore;

    let dist = shortest_path_lengths(g);
    let structure = build_attention_structure::<f64>(cfg, g, Some(&dist)).unwrap();
    let targets: Vec<usize> = g.labels().iter().map(|&y| y as usize).collect();
    let ids: Vec<usize> = (0..g.n()).collect();
    let x = g.features().mapv(|v| v as f64);
    let loss = |p: &ParamStore<f64>| {
        let mut t = Tape::new();
        let bound = p.bind(&mut t);
        let xv = t.constant(x.clone());
        let out = forward_on_tape::<f64, rand_chacha::ChaCha8Rng>(&mut t, &bound, cfg, &structure, xv, None).unwrap();
        let l = t.cross_entropy(out.logits, &targets, &ids).unwrap();
        (t, bound, l)
    };
    let params = init_params::<f64>(cfg, seed).unwrap();
    let (t, bound, l) = loss(&params);
    let analytic = bound.collect(&t.backward(l).unwrap());

    let mut probe = params.clone();
    let mut out = Vec::new();
    for (name, value) in params.iter() {
        let mut numeric = Array2::zeros(value.dim());
        for (ij, &v) in value.indexed_iter() {
            probe.get_mut(name).unwrap()[ij] = v + FD_EPS;
            let (t, _, l) = loss(&probe);
            let up = t.value(l)[[0, 0]];
            probe.get_mut(name).unwrap()[ij] = v - FD_EPS;
            let (t, _, l) = loss(&probe);
            let down = t.value(l)[[0, 0]];
            probe.get_mut(name).unwrap()[ij] = v;
            numeric[ij] = (up - down) / (2.0 * FD_EPS);
        }
        out.push((name.to_owned(), relative_error(&analytic[name], &numeric)));
    }
    out
}

/// Gradient checks for every tape op at one random size. Matrix outputs are
/// reduced with a fixed random weighting so every entry matters.
pub fn op_gradchecks(seed: u64, n: usize, m: usize) -> Vec<(&'static str, f64)> {
    use attn_graphs::tensor::ScoreOffset;
    use std::sync::Arc;

    let mut r = rng::seeded(seed);
    let mut mat = |rows, cols| random_matrix(&mut r, rows, cols);
    let a = mat(n, m);
    let b = mat(m, n);
    let c = mat(n, m);
    let sq = mat(n, n);
    let row = mat(1, m);
    let gamma = mat(1, m);
    let weight_nm = mat(n, m);
    let weight_nn = mat(n, n);
    let weight_n2m = mat(n, 2 * m);
    let bias = mat(n, n);
    let konst = Arc::new(mat(n, n));
    let away_from_kink = a.mapv(|v| if v.abs() < 0.1 { v + 0.3 } else { v });
    let mut r2 = rng::seeded(seed ^ 0xdead);
    let allowed = Arc::new(Array2::from_shape_fn((n, n), |(i, j)| i == j || rng::unit_f64(&mut r2) < 0.5));
    let drop = Arc::new(Array2::from_shape_fn((n, m), |(i, j)| ((i + j) % 3) as f64 * 0.5));
    let targets: Vec<usize> = (0..n).map(|i| (i * 7 + seed as usize) % m.max(2)).collect();
    let logits = mat(n, m.max(2));
    let ids: Vec<usize> = (0..n).filter(|i| i % 2 == 0).collect();

    let weigh = |t: &mut Tape<f64>, x: Var, w: &Array2<f64>| {
        let y = t.mul_const(x, Arc::new(w.clone())).unwrap();
        t.sum(y)
    };

    let mut out = Vec::new();
    out.push(("matmul", gradcheck(&[a.clone(), b.clone()], |t, v| {
        let y = t.matmul(v[0], v[1]).unwrap();
        weigh(t, y, &weight_nn)
    })));
    out.push(("matmul_nt", gradcheck(&[a.clone(), c.clone()], |t, v| {
        let y = t.matmul_nt(v[0], v[1]).unwrap();
        weigh(t, y, &weight_nn)
    })));
    out.push(("const_matmul", gradcheck(&[a.clone()], |t, v| {
        let y = t.const_matmul(konst.clone(), v[0]).unwrap();
        weigh(t, y, &weight_nm)
    })));
    out.push(("add", gradcheck(&[a.clone(), c.clone()], |t, v| {
        let y = t.add(v[0], v[1]).unwrap();
        weigh(t, y, &weight_nm)
    })));
    out.push(("add_row", gradcheck(&[a.clone(), row.clone()], |t, v| {
        let y = t.add_row(v[0], v[1]).unwrap();
        weigh(t, y, &weight_nm)
    })));
    out.push(("scale", gradcheck(&[a.clone()], |t, v| {
        let y = t.scale(v[0], -1.7);
        weigh(t, y, &weight_nm)
    })));
    out.push(("mul_const", gradcheck(&[a.clone()], |t, v| {
        let y = t.mul_const(v[0], drop.clone()).unwrap();
        weigh(t, y, &weight_nm)
    })));
    out.push(("relu", gradcheck(&[away_from_kink.clone()], |t, v| {
        let y = t.relu(v[0]);
        weigh(t, y, &weight_nm)
    })));
    out.push(("gelu", gradcheck(&[a.clone()], |t, v| {
        let y = t.gelu(v[0]);
        weigh(t, y, &weight_nm)
    })));
    let offsets = [
        ("softmax", ScoreOffset::None),
        ("softmax+bias", ScoreOffset::Bias(Arc::new(bias.clone()))),
        ("softmax+mask", ScoreOffset::Mask(allowed.clone())),
        ("softmax+masked_bias", ScoreOffset::MaskedBias { bias: Arc::new(bias.clone()), allowed: allowed.clone() }),
    ];
    for (name, offset) in offsets {
        out.push((name, gradcheck(&[sq.clone()], |t, v| {
            let y = t.softmax(v[0], 0.7, &offset).unwrap();
            weigh(t, y, &weight_nn)
        })));
    }
    out.push(("layer_norm", gradcheck(&[a.clone(), gamma.clone(), row.clone()], |t, v| {
        let y = t.layer_norm(v[0], v[1], v[2]).unwrap();
        weigh(t, y, &weight_nm)
    })));
    out.push(("concat_cols", gradcheck(&[a.clone(), c.clone()], |t, v| {
        let y = t.concat_cols(&[v[0], v[1]]).unwrap();
        weigh(t, y, &weight_n2m)
    })));
    out.push(("slice_cols", gradcheck(&[a.clone()], |t, v| {
        let w = m / 2 + 1;
        let y = t.slice_cols(v[0], m - w, w).unwrap();
        weigh(t, y, &weight_nm.slice(ndarray::s![.., ..w]).to_owned())
    })));
    out.push(("cross_entropy", gradcheck(&[logits.clone()], |t, v| t.cross_entropy(v[0], &targets, &ids).unwrap())));
    out.push(("sum", gradcheck(&[a.clone()], |t, v| t.sum(v[0]))));
    out
}
