use std::sync::Arc;

use ndarray::{s, Array2, Axis, Zip};

use super::{Scalar, TensorError};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One entry of an additive score matrix: a finite bias or the mask marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Additive<T> {
    Value(T),
    NegInf,
}

/// What is added to attention scores before the row softmax.
///
/// Masked positions are never materialised as large negative numbers; the
/// kernel skips them and writes exact zeros.
#[derive(Debug, Clone)]
pub enum ScoreOffset<T> {
    None,
    Bias(Arc<Array2<T>>),
    /// `true` where attention is allowed.
    Mask(Arc<Array2<bool>>),
    MaskedBias {
        bias: Arc<Array2<T>>,
        allowed: Arc<Array2<bool>>,
    },
}

impl<T: Scalar> ScoreOffset<T> {
    pub fn from_entries(entries: &Array2<Additive<T>>) -> Self {
        let allowed = entries.mapv(|e| matches!(e, Additive::Value(_)));
        let bias = entries.mapv(|e| match e {
            Additive::Value(v) => v,
            Additive::NegInf => T::zero(),
        });
        let any_masked = allowed.iter().any(|&a| !a);
        let any_bias = bias.iter().any(|&b| b != T::zero());
        match (any_masked, any_bias) {
            (false, false) => Self::None,
            (false, true) => Self::Bias(Arc::new(bias)),
            (true, false) => Self::Mask(Arc::new(allowed)),
            (true, true) => Self::MaskedBias { bias: Arc::new(bias), allowed: Arc::new(allowed) },
        }
    }

    fn dims(&self) -> Option<(usize, usize)> {
        match self {
            Self::None => None,
            Self::Bias(b) | Self::MaskedBias { bias: b, .. } => Some(b.dim()),
            Self::Mask(m) => Some(m.dim()),
        }
    }

    fn bias(&self) -> Option<&Array2<T>> {
        match self {
            Self::Bias(b) | Self::MaskedBias { bias: b, .. } => Some(b),
            _ => None,
        }
    }

    fn allowed(&self) -> Option<&Array2<bool>> {
        match self {
            Self::Mask(m) | Self::MaskedBias { allowed: m, .. } => Some(m),
            _ => None,
        }
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    ConstMatMul(Arc<Array2<T>>, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    MulConst(Var, Arc<Array2<T>>),
    Relu(Var),
    Gelu(Var),
    Softmax { scores: Var, scale: T },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Array2<T>, inv_std: Vec<T> },
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize },
    CrossEntropy { logits: Var, targets: Vec<usize>, ids: Vec<usize>, probs: Array2<T> },
    Sum(Var),
}

struct Node<T> {
    value: Array2<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn check_same(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<(), TensorError> {
    if a == b {
        Ok(())
    } else {
        Err(TensorError::ShapeMismatch { op, left: a, right: b })
    }
}

fn erf<T: Scalar>(x: T) -> T {
    T::of(libm::erf(x.as_f64()))
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = match op {
            Op::Leaf => false,
            _ => inputs.iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Array2<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(TensorError::ShapeMismatch { op: "matmul", left: sa, right: sb });
        }
        let out = self.value(a).dot(self.value(b));
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.1 {
            return Err(TensorError::ShapeMismatch { op: "matmul_nt", left: sa, right: sb });
        }
        let out = self.value(a).dot(&self.value(b).t());
        Ok(self.push(out, Op::MatMulNT(a, b), &[a, b]))
    }

    /// `c · x` for a constant matrix `c`.
    pub fn const_matmul(&mut self, c: Arc<Array2<T>>, x: Var) -> Result<Var, TensorError> {
        let sx = self.shape(x);
        if c.ncols() != sx.0 {
            return Err(TensorError::ShapeMismatch { op: "const_matmul", left: c.dim(), right: sx });
        }
        let out = c.dot(self.value(x));
        Ok(self.push(out, Op::ConstMatMul(c, x), &[x]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        check_same("add", self.shape(a), self.shape(b))?;
        let out = self.value(a) + self.value(b);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    /// Adds a `1 × m` row to every row of an `n × m` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr.0 != 1 || sr.1 != sa.1 {
            return Err(TensorError::ShapeMismatch { op: "add_row", left: sa, right: sr });
        }
        let out = self.value(a) + self.value(row);
        Ok(self.push(out, Op::AddRow(a, row), &[a, row]))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a) * s;
        self.push(out, Op::Scale(a, s), &[a])
    }

    /// Elementwise product with a constant (dropout masks).
    pub fn mul_const(&mut self, a: Var, m: Arc<Array2<T>>) -> Result<Var, TensorError> {
        check_same("mul_const", self.shape(a), m.dim())?;
        let out = self.value(a) * &*m;
        Ok(self.push(out, Op::MulConst(a, m), &[a]))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| if x > T::zero() { x } else { T::zero() });
        self.push(out, Op::Relu(a), &[a])
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let half = T::of(0.5);
        let inv_sqrt2 = T::of(std::f64::consts::FRAC_1_SQRT_2);
        let out = self.value(a).mapv(|x| half * x * (T::one() + erf(x * inv_sqrt2)));
        self.push(out, Op::Gelu(a), &[a])
    }

    /// Row-wise `softmax(scale · scores + offset)`.
    ///
    /// Masked entries come out as exact zeros; a row with no allowed entry is
    /// an error.
    pub fn softmax(&mut self, scores: Var, scale: T, offset: &ScoreOffset<T>) -> Result<Var, TensorError> {
        let s = self.value(scores);
        if let Some(d) = offset.dims() {
            check_same("softmax", s.dim(), d)?;
        }
        let (n, m) = s.dim();
        let mut out = Array2::<T>::zeros((n, m));
        let bias = offset.bias();
        let allowed = offset.allowed();
        for i in 0..n {
            let srow = s.row(i);
            let mut orow = out.row_mut(i);
            let mut max = T::neg_infinity();
            for j in 0..m {
                if allowed.is_some_and(|a| !a[[i, j]]) {
                    continue;
                }
                let z = scale * srow[j] + bias.map_or(T::zero(), |b| b[[i, j]]);
                orow[j] = z;
                if z > max {
                    max = z;
                }
            }
            if max == T::neg_infinity() {
                return Err(TensorError::AllMaskedRow { row: i });
            }
            let mut total = T::zero();
            for j in 0..m {
                if allowed.is_some_and(|a| !a[[i, j]]) {
                    continue;
                }
                let e = (orow[j] - max).exp();
                orow[j] = e;
                total += e;
            }
            orow.mapv_inplace(|x| x / total);
        }
        Ok(self.push(out, Op::Softmax { scores, scale }, &[scores]))
    }

    /// Per-row normalisation to zero mean and unit (population) variance,
    /// then `gamma ⊙ x̂ + beta` with `1 × m` gamma/beta.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var, TensorError> {
        let sx = self.shape(x);
        for p in [gamma, beta] {
            let sp = self.shape(p);
            if sp != (1, sx.1) {
                return Err(TensorError::ShapeMismatch { op: "layer_norm", left: sx, right: sp });
            }
        }
        let xv = self.value(x);
        let m = T::of(sx.1 as f64);
        let eps = T::of(LAYER_NORM_EPS);
        let mut xhat = Array2::<T>::zeros(sx);
        let mut inv_std = Vec::with_capacity(sx.0);
        for (i, row) in xv.rows().into_iter().enumerate() {
            let mean = row.sum() / m;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / m;
            let is = T::one() / (var + eps).sqrt();
            xhat.row_mut(i).assign(&row.mapv(|v| (v - mean) * is));
            inv_std.push(is);
        }
        let out = &xhat * self.value(gamma) + self.value(beta);
        Ok(self.push(out, Op::LayerNorm { x, gamma, beta, xhat, inv_std }, &[x, gamma, beta]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let rows = self.shape(parts[0]).0;
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    left: self.shape(parts[0]),
                    right: self.shape(p),
                });
            }
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let sx = self.shape(x);
        if start + len > sx.1 {
            return Err(TensorError::ShapeMismatch { op: "slice_cols", left: sx, right: (sx.0, start + len) });
        }
        let out = self.value(x).slice(s![.., start..start + len]).to_owned();
        Ok(self.push(out, Op::SliceCols { x, start }, &[x]))
    }

    /// Mean negative log-likelihood of `targets[i]` over rows `ids`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], ids: &[usize]) -> Result<Var, TensorError> {
        if ids.is_empty() {
            return Err(TensorError::EmptyMask);
        }
        let lv = self.value(logits);
        let (n, k) = lv.dim();
        if targets.len() != n {
            return Err(TensorError::ShapeMismatch { op: "cross_entropy", left: (n, k), right: (targets.len(), 1) });
        }
        let mut probs = Array2::<T>::zeros((ids.len(), k));
        let mut total = T::zero();
        for (r, &i) in ids.iter().enumerate() {
            let t = targets[i];
            if t >= k {
                return Err(TensorError::TargetOutOfRange { row: i, target: t, classes: k });
            }
            let row = lv.row(i);
            let max = row.fold(T::neg_infinity(), |a, &b| a.max(b));
            let mut z = T::zero();
            for (c, &x) in row.iter().enumerate() {
                let e = (x - max).exp();
                probs[[r, c]] = e;
                z += e;
            }
            probs.row_mut(r).mapv_inplace(|e| e / z);
            total += z.ln() + max - row[t];
        }
        let loss = Array2::from_elem((1, 1), total / T::of(ids.len() as f64));
        let op = Op::CrossEntropy { logits, targets: targets.to_vec(), ids: ids.to_vec(), probs };
        Ok(self.push(loss, op, &[logits]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(out, Op::Sum(a), &[a])
    }

    /// Reverse sweep from a `1 × 1` loss. Gradients are kept for leaves that
    /// were created with `requires_grad`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, TensorError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(TensorError::NonScalarLoss(shape));
        }
        let count = loss.0 + 1;
        let mut grads: Vec<Option<Array2<T>>> = (0..count).map(|_| None).collect();
        let mut leaves: Vec<Option<Array2<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for idx in (0..count).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let send = |v: Var, contribution: Array2<T>, grads: &mut Vec<Option<Array2<T>>>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => *acc += &contribution,
                    slot => *slot = Some(contribution),
                }
            };
            match &node.op {
                Op::Leaf => leaves[idx] = Some(g),
                Op::MatMul(a, b) => {
                    if self.nodes[a.0].needs_grad {
                        send(*a, g.dot(&self.value(*b).t()), &mut grads);
                    }
                    if self.nodes[b.0].needs_grad {
                        send(*b, self.value(*a).t().dot(&g), &mut grads);
                    }
                }
                Op::MatMulNT(a, b) => {
                    if self.nodes[a.0].needs_grad {
                        send(*a, g.dot(self.value(*b)), &mut grads);
                    }
                    if self.nodes[b.0].needs_grad {
                        send(*b, g.t().dot(self.value(*a)), &mut grads);
                    }
                }
                Op::ConstMatMul(c, x) => send(*x, c.t().dot(&g), &mut grads),
                Op::Add(a, b) => {
                    send(*a, g.clone(), &mut grads);
                    send(*b, g, &mut grads);
                }
                Op::AddRow(a, row) => {
                    send(*row, g.sum_axis(Axis(0)).insert_axis(Axis(0)), &mut grads);
                    send(*a, g, &mut grads);
                }
                Op::Scale(a, s) => send(*a, g * *s, &mut grads),
                Op::MulConst(a, m) => send(*a, g * &**m, &mut grads),
                Op::Relu(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(self.value(*a)).for_each(|d, &x| {
                        if x <= T::zero() {
                            *d = T::zero();
                        }
                    });
                    send(*a, d, &mut grads);
                }
                Op::Gelu(a) => {
                    let half = T::of(0.5);
                    let inv_sqrt2 = T::of(std::f64::consts::FRAC_1_SQRT_2);
                    let inv_sqrt_2pi = T::of(0.398_942_280_401_432_7);
                    let mut d = g;
                    Zip::from(&mut d).and(self.value(*a)).for_each(|d, &x| {
                        let cdf = half * (T::one() + erf(x * inv_sqrt2));
                        let pdf = inv_sqrt_2pi * (-half * x * x).exp();
                        *d *= cdf + x * pdf;
                    });
                    send(*a, d, &mut grads);
                }
                Op::Softmax { scores, scale } => {
                    let p = &node.value;
                    let mut d = g;
                    for (mut drow, prow) in d.rows_mut().into_iter().zip(p.rows()) {
                        let dot: T = drow.iter().zip(prow.iter()).map(|(&a, &b)| a * b).sum();
                        Zip::from(&mut drow).and(&prow).for_each(|dv, &pv| *dv = *scale * pv * (*dv - dot));
                    }
                    send(*scores, d, &mut grads);
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    send(*beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)), &mut grads);
                    send(*gamma, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)), &mut grads);
                    if self.nodes[x.0].needs_grad {
                        let gv = self.value(*gamma);
                        let mut dxhat = &g * gv;
                        let m = T::of(xhat.ncols() as f64);
                        for (i, (mut drow, hrow)) in dxhat.rows_mut().into_iter().zip(xhat.rows()).enumerate() {
                            let sum_d: T = drow.sum();
                            let sum_dh: T = drow.iter().zip(hrow.iter()).map(|(&a, &b)| a * b).sum();
                            let is = inv_std[i];
                            Zip::from(&mut drow).and(&hrow).for_each(|dv, &h| {
                                *dv = is / m * (m * *dv - sum_d - h * sum_dh);
                            });
                        }
                        send(*x, dxhat, &mut grads);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        send(p, g.slice(s![.., start..start + w]).to_owned(), &mut grads);
                        start += w;
                    }
                }
                Op::SliceCols { x, start } => {
                    let mut d = Array2::zeros(self.shape(*x));
                    let w = g.ncols();
                    d.slice_mut(s![.., *start..*start + w]).assign(&g);
                    send(*x, d, &mut grads);
                }
                Op::CrossEntropy { logits, targets, ids, probs } => {
                    let upstream = g[[0, 0]] / T::of(ids.len() as f64);
                    let mut d = Array2::zeros(self.shape(*logits));
                    for (r, &i) in ids.iter().enumerate() {
                        let mut row = d.row_mut(i);
                        row += &probs.row(r);
                        row[targets[i]] -= T::one();
                        row.mapv_inplace(|v| v * upstream);
                    }
                    send(*logits, d, &mut grads);
                }
                Op::Sum(a) => {
                    let d = Array2::from_elem(self.shape(*a), g[[0, 0]]);
                    send(*a, d, &mut grads);
                }
            }
        }

        let shapes = self.nodes.iter().map(|n| n.value.dim()).collect();
        Ok(Gradients { leaves, shapes })
    }
}

/// Leaf gradients from one reverse sweep.
pub struct Gradients<T> {
    leaves: Vec<Option<Array2<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Array2<T>> {
        self.leaves.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Array2<T> {
        self.get(v).cloned().unwrap_or_else(|| Array2::zeros(self.shapes[v.0]))
    }
}
