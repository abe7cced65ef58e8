use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mixture;
use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

const LN_EPS: f64 = 1e-5;

enum Op<T> {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Softmax(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, rstd: Vec<T> },
    Gelu(Var),
    Tanh(Var),
    Dropout { x: Var, mask: Vec<T> },
    Embedding { table: Var, ids: Vec<usize> },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    LogSigmoid(Var),
    Sum(Var),
    Mean(Var),
    RowLoss { input: Var, local: Vec<T> },
}

struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Tape of operations over borrowed parameters.
///
/// Nodes are appended in evaluation order, so the tape is already
/// topologically sorted. [`Graph::backward`] adds into the parameter
/// gradients held by the graph; calling it twice accumulates twice.
pub struct Graph<'p, T: Scalar> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
    training: bool,
    rng: ChaCha8Rng,
    param_grads: Gradients<T>,
    input_grads: Vec<Option<Vec<T>>>,
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    let c = shape.last().copied().unwrap_or(1);
    let n: usize = shape.iter().product();
    (if c == 0 { 0 } else { n / c }, c)
}

impl<'p, T: Scalar> Graph<'p, T> {
    /// Evaluation graph: dropout is the identity.
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self::build(params, false, 0)
    }

    /// Training graph; `seed` drives dropout masks.
    pub fn training(params: &'p ParamStore<T>, seed: u64) -> Self {
        Self::build(params, true, seed)
    }

    fn build(params: &'p ParamStore<T>, training: bool, seed: u64) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
            training,
            rng: ChaCha8Rng::seed_from_u64(seed),
            param_grads: Gradients::zeros(params.len()),
            input_grads: Vec::new(),
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &[T] {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.get(id).data(),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).expect("consistent node")
    }

    /// First element of a node, typically a scalar loss.
    pub fn scalar(&self, v: Var) -> T {
        self.value(v)[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant leaf.
    pub fn input(&mut self, tensor: Tensor<T>) -> Var {
        let shape = tensor.shape().to_vec();
        self.push(shape, tensor.into_data(), Op::Input, false)
    }

    /// Leaf whose gradient is kept and readable via [`Graph::input_grad`].
    pub fn input_with_grad(&mut self, tensor: Tensor<T>) -> Var {
        let shape = tensor.shape().to_vec();
        self.push(shape, tensor.into_data(), Op::Input, true)
    }

    /// Parameter leaf; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let shape = self.params.get(id).shape().to_vec();
        let v = self.push(shape, Vec::new(), Op::Param(id), true);
        self.param_vars[id.0] = Some(v);
        v
    }

    fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> Error {
        Error::ShapeMismatch {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        }
    }

    /// `[m, k] x [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Self::mismatch("matmul", &sa, &sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(m, k, n, self.value(a), (k, 1), self.value(b), (n, 1), &mut out, T::zero());
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), rg))
    }

    /// `[m, k] x [n, k]^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(Self::mismatch("matmul_t", &sa, &sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[0]);
        let mut out = vec![T::zero(); m * n];
        gemm(m, k, n, self.value(a), (k, 1), self.value(b), (1, k), &mut out, T::zero());
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], out, Op::MatMulT(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Self::mismatch("transpose", &s, &[]));
        }
        let (r, c) = (s[0], s[1]);
        let x = self.value(a);
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = x[i * c + j];
            }
        }
        let rg = self.rg(a);
        Ok(self.push(vec![c, r], out, Op::Transpose(a), rg))
    }

    /// Same values under a new shape with equal element count.
    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(a).len() {
            return Err(Self::mismatch("reshape", self.shape(a), &shape));
        }
        let out = self.value(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push(shape, out, Op::Reshape(a), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Self::mismatch("add", self.shape(a), self.shape(b)));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| *x + *y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add(a, b), rg))
    }

    /// Adds a vector to every row (bias).
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (_, c) = rows_cols(self.shape(a));
        if self.value(b).len() != c {
            return Err(Self::mismatch("add_row", self.shape(a), self.shape(b)));
        }
        let bv = self.value(b);
        let out = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(i, x)| *x + bv[i % c])
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), out, Op::AddRow(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Self::mismatch("mul", self.shape(a), self.shape(b)));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| *x * *y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let out = self.value(a).iter().map(|x| *x * factor).collect();
        let rg = self.rg(a);
        self.push(self.shape(a).to_vec(), out, Op::Scale(a, factor), rg)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let (r, c) = rows_cols(self.shape(a));
        let x = self.value(a);
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            let row = &x[i * c..(i + 1) * c];
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let o = &mut out[i * c..(i + 1) * c];
            let mut z = T::zero();
            for (d, s) in o.iter_mut().zip(row) {
                *d = (*s - m).exp();
                z += *d;
            }
            o.iter_mut().for_each(|d| *d /= z);
        }
        let rg = self.rg(a);
        self.push(self.shape(a).to_vec(), out, Op::Softmax(a), rg)
    }

    /// Normalizes each row, then applies `gamma` and `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (r, c) = rows_cols(self.shape(x));
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(Self::mismatch("layer_norm", self.shape(x), self.shape(gamma)));
        }
        let xv = self.value(x);
        let (g, b) = (self.value(gamma), self.value(beta));
        let mut xhat = vec![T::zero(); r * c];
        let mut rstd = vec![T::zero(); r];
        let mut out = vec![T::zero(); r * c];
        let cn = T::lit(c as f64);
        for i in 0..r {
            let row = &xv[i * c..(i + 1) * c];
            let mean = row.iter().copied().sum::<T>() / cn;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / cn;
            let rs = T::one() / (var + T::lit(LN_EPS)).sqrt();
            rstd[i] = rs;
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat[i * c + j] = h;
                out[i * c + j] = h * g[j] + b[j];
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let shape = self.shape(x).to_vec();
        Ok(self.push(
            shape,
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| gelu(x).0).collect();
        let rg = self.rg(a);
        self.push(self.shape(a).to_vec(), out, Op::Gelu(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|x| x.tanh()).collect();
        let rg = self.rg(a);
        self.push(self.shape(a).to_vec(), out, Op::Tanh(a), rg)
    }

    /// Inverted dropout; the identity outside training or for `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        if !self.training || p <= 0.0 {
            return a;
        }
        let keep = T::lit(1.0 / (1.0 - p));
        let n = self.value(a).len();
        let mask: Vec<T> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < p { T::zero() } else { keep })
            .collect();
        let out = self.value(a).iter().zip(&mask).map(|(x, m)| *x * *m).collect();
        let rg = self.rg(a);
        self.push(self.shape(a).to_vec(), out, Op::Dropout { x: a, mask }, rg)
    }

    /// Gathers rows of `table` (`[V, d]`).
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let s = self.shape(table).to_vec();
        if s.len() != 2 {
            return Err(Self::mismatch("embedding", &s, &[]));
        }
        let (v, d) = (s[0], s[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::Unknown {
                kind: "embedding index",
                value: bad.to_string(),
            });
        }
        let t = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        let rg = self.rg(table);
        Ok(self.push(
            vec![ids.len(), d],
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Joins 2-D nodes side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::EmptyInput("concat_cols"))?;
        let (r, _) = rows_cols(self.shape(first));
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = rows_cols(self.shape(p));
            if pr != r {
                return Err(Self::mismatch("concat_cols", self.shape(first), self.shape(p)));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[i * w..(i + 1) * w]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(vec![r, total], out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Stacks 2-D nodes vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::EmptyInput("concat_rows"))?;
        let (_, c) = rows_cols(self.shape(first));
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (pr, pc) = rows_cols(self.shape(p));
            if pc != c {
                return Err(Self::mismatch("concat_rows", self.shape(first), self.shape(p)));
            }
            rows += pr;
            out.extend_from_slice(self.value(p));
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(vec![rows, c], out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Columns `start..end` of a 2-D node.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = rows_cols(self.shape(x));
        if start > end || end > c {
            return Err(Self::mismatch("slice_cols", self.shape(x), &[start, end]));
        }
        let w = end - start;
        let v = self.value(x);
        let mut out = Vec::with_capacity(r * w);
        for i in 0..r {
            out.extend_from_slice(&v[i * c + start..i * c + end]);
        }
        let rg = self.rg(x);
        Ok(self.push(vec![r, w], out, Op::SliceCols { x, start }, rg))
    }

    /// Rows `start..end` of a 2-D node.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = rows_cols(self.shape(x));
        if start > end || end > r {
            return Err(Self::mismatch("slice_rows", self.shape(x), &[start, end]));
        }
        let out = self.value(x)[start * c..end * c].to_vec();
        let rg = self.rg(x);
        Ok(self.push(vec![end - start, c], out, Op::SliceRows { x, start }, rg))
    }

    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| mixture::log_sigmoid(x)).collect();
        let rg = self.rg(a);
        self.push(self.shape(a).to_vec(), out, Op::LogSigmoid(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().copied().sum();
        let rg = self.rg(a);
        self.push(vec![1], vec![s], Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1);
        let s = self.value(a).iter().copied().sum::<T>() / T::lit(n as f64);
        let rg = self.rg(a);
        self.push(vec![1], vec![s], Op::Mean(a), rg)
    }

    /// Per-row `-log softmax(logits)[target]`, shape `[n]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (r, c) = rows_cols(self.shape(logits));
        if targets.len() != r {
            return Err(Self::mismatch("cross_entropy", self.shape(logits), &[targets.len()]));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::Unknown {
                kind: "class target",
                value: bad.to_string(),
            });
        }
        let x = self.value(logits);
        let mut out = Vec::with_capacity(r);
        let mut local = vec![T::zero(); r * c];
        for i in 0..r {
            let row = &x[i * c..(i + 1) * c];
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let z: T = row.iter().map(|v| (*v - m).exp()).sum();
            let lse = m + z.ln();
            out.push(lse - row[targets[i]]);
            for j in 0..c {
                local[i * c + j] = (row[j] - lse).exp();
            }
            local[i * c + targets[i]] -= T::one();
        }
        let rg = self.rg(logits);
        Ok(self.push(vec![r], out, Op::RowLoss { input: logits, local }, rg))
    }

    /// Per-row discretized logistic mixture NLL, shape `[n]`.
    ///
    /// Each row of `params` holds `3K` values (logits, means, log-scales);
    /// `targets` are in `[-1, 1]`.
    pub fn mixture_nll(&mut self, params: Var, targets: &[T], bins: usize) -> Result<Var> {
        let (r, c) = rows_cols(self.shape(params));
        if targets.len() != r || c % 3 != 0 || c == 0 {
            return Err(Self::mismatch("mixture_nll", self.shape(params), &[targets.len()]));
        }
        let x = self.value(params);
        let mut out = Vec::with_capacity(r);
        let mut local = Vec::with_capacity(r * c);
        for i in 0..r {
            let (nll, g) = mixture::nll_with_grad(&x[i * c..(i + 1) * c], targets[i], bins);
            out.push(nll);
            local.extend(g);
        }
        let rg = self.rg(params);
        Ok(self.push(vec![r], out, Op::RowLoss { input: params, local }, rg))
    }

    /// Reverse pass from a single-element node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let v = self.scalar(loss);
        if !v.is_finite() {
            return Err(Error::NonFiniteLoss {
                context: "backward".into(),
                value: v.as_f64(),
            });
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backward_node(idx, &g, &mut grads);
            match self.nodes[idx].op {
                Op::Param(id) => self.param_grads.accumulate(id, &g),
                Op::Input => {
                    if self.input_grads.len() <= idx {
                        self.input_grads.resize(idx + 1, None);
                    }
                    match &mut self.input_grads[idx] {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                        slot @ None => *slot = Some(g),
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn backward_node(&self, idx: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if self.rg(*a) {
                    let da = slot(grads, *a, m * k);
                    gemm(m, n, k, g, (n, 1), self.value(*b), (1, n), da, T::one());
                }
                if self.rg(*b) {
                    let db = slot(grads, *b, k * n);
                    gemm(k, m, n, self.value(*a), (1, k), g, (n, 1), db, T::one());
                }
            }
            Op::MatMulT(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[0];
                if self.rg(*a) {
                    let da = slot(grads, *a, m * k);
                    gemm(m, n, k, g, (n, 1), self.value(*b), (k, 1), da, T::one());
                }
                if self.rg(*b) {
                    let db = slot(grads, *b, n * k);
                    gemm(n, m, k, g, (1, n), self.value(*a), (k, 1), db, T::one());
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (self.shape(*a)[0], self.shape(*a)[1]);
                let da = slot(grads, *a, r * c);
                for i in 0..r {
                    for j in 0..c {
                        da[i * c + j] += g[j * r + i];
                    }
                }
            }
            Op::Reshape(a) => add_into(slot(grads, *a, g.len()), g),
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.rg(v) {
                        add_into(slot(grads, v, g.len()), g);
                    }
                }
            }
            Op::AddRow(a, b) => {
                if self.rg(*a) {
                    add_into(slot(grads, *a, g.len()), g);
                }
                if self.rg(*b) {
                    let c = self.value(*b).len();
                    let db = slot(grads, *b, c);
                    for (i, gv) in g.iter().enumerate() {
                        db[i % c] += *gv;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let da = slot(grads, *a, g.len());
                    for i in 0..g.len() {
                        da[i] += g[i] * bv[i];
                    }
                }
                if self.rg(*b) {
                    let db = slot(grads, *b, g.len());
                    for i in 0..g.len() {
                        db[i] += g[i] * av[i];
                    }
                }
            }
            Op::Scale(a, f) => {
                let da = slot(grads, *a, g.len());
                for (d, gv) in da.iter_mut().zip(g) {
                    *d += *gv * *f;
                }
            }
            Op::Softmax(a) => {
                let (r, c) = rows_cols(&node.shape);
                let da = slot(grads, *a, r * c);
                for i in 0..r {
                    let (y, gy) = (&out[i * c..(i + 1) * c], &g[i * c..(i + 1) * c]);
                    let dot: T = y.iter().zip(gy).map(|(a, b)| *a * *b).sum();
                    for j in 0..c {
                        da[i * c + j] += y[j] * (gy[j] - dot);
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let (r, c) = rows_cols(&node.shape);
                let gam = self.value(*gamma);
                if self.rg(*gamma) {
                    let dg = slot(grads, *gamma, c);
                    for i in 0..r * c {
                        dg[i % c] += g[i] * xhat[i];
                    }
                }
                if self.rg(*beta) {
                    let db = slot(grads, *beta, c);
                    for i in 0..r * c {
                        db[i % c] += g[i];
                    }
                }
                if self.rg(*x) {
                    let cn = T::lit(c as f64);
                    let dx = slot(grads, *x, r * c);
                    let mut dh = vec![T::zero(); c];
                    for i in 0..r {
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for j in 0..c {
                            dh[j] = g[i * c + j] * gam[j];
                            m1 += dh[j];
                            m2 += dh[j] * xhat[i * c + j];
                        }
                        m1 /= cn;
                        m2 /= cn;
                        for j in 0..c {
                            dx[i * c + j] += rstd[i] * (dh[j] - m1 - xhat[i * c + j] * m2);
                        }
                    }
                }
            }
            Op::Gelu(a) => {
                let av = self.value(*a);
                let da = slot(grads, *a, g.len());
                for i in 0..g.len() {
                    da[i] += g[i] * gelu(av[i]).1;
                }
            }
            Op::Tanh(a) => {
                let da = slot(grads, *a, g.len());
                for i in 0..g.len() {
                    da[i] += g[i] * (T::one() - out[i] * out[i]);
                }
            }
            Op::Dropout { x, mask } => {
                let dx = slot(grads, *x, g.len());
                for i in 0..g.len() {
                    dx[i] += g[i] * mask[i];
                }
            }
            Op::Embedding { table, ids } => {
                let d = self.shape(*table)[1];
                let n = self.value(*table).len();
                let dt = slot(grads, *table, n);
                for (r, &id) in ids.iter().enumerate() {
                    add_into(&mut dt[id * d..(id + 1) * d], &g[r * d..(r + 1) * d]);
                }
            }
            Op::ConcatCols(parts) => {
                let (r, total) = rows_cols(&node.shape);
                let mut offset = 0;
                for &p in parts {
                    let (_, w) = rows_cols(self.shape(p));
                    if self.rg(p) {
                        let dp = slot(grads, p, r * w);
                        for i in 0..r {
                            add_into(
                                &mut dp[i * w..(i + 1) * w],
                                &g[i * total + offset..i * total + offset + w],
                            );
                        }
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.rg(p) {
                        add_into(slot(grads, p, n), &g[offset..offset + n]);
                    }
                    offset += n;
                }
            }
            Op::SliceCols { x, start } => {
                let (r, c) = rows_cols(self.shape(*x));
                let w = node.shape[1];
                let dx = slot(grads, *x, r * c);
                for i in 0..r {
                    add_into(
                        &mut dx[i * c + start..i * c + start + w],
                        &g[i * w..(i + 1) * w],
                    );
                }
            }
            Op::SliceRows { x, start } => {
                let (_, c) = rows_cols(self.shape(*x));
                let n = self.value(*x).len();
                let dx = slot(grads, *x, n);
                add_into(&mut dx[start * c..start * c + g.len()], g);
            }
            Op::LogSigmoid(a) => {
                let av = self.value(*a);
                let da = slot(grads, *a, g.len());
                for i in 0..g.len() {
                    da[i] += g[i] * mixture::sigmoid(-av[i]);
                }
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                slot(grads, *a, n).iter_mut().for_each(|d| *d += g[0]);
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                let s = g[0] / T::lit(n.max(1) as f64);
                slot(grads, *a, n).iter_mut().for_each(|d| *d += s);
            }
            Op::RowLoss { input, local } => {
                let (r, c) = rows_cols(self.shape(*input));
                let di = slot(grads, *input, r * c);
                for i in 0..r {
                    for j in 0..c {
                        di[i * c + j] += g[i] * local[i * c + j];
                    }
                }
            }
        }
    }

    /// Parameter gradients accumulated so far.
    pub fn param_grads(&self) -> &Gradients<T> {
        &self.param_grads
    }

    pub fn into_param_grads(self) -> Gradients<T> {
        self.param_grads
    }

    /// Gradient of an [`Graph::input_with_grad`] leaf.
    pub fn input_grad(&self, v: Var) -> Option<&[T]> {
        self.input_grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn slot<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut [T] {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += *s);
}

fn gelu<T: Scalar>(x: T) -> (T, T) {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let a = T::lit(0.044715);
    let half = T::lit(0.5);
    let inner = c * (x + a * x * x * x);
    let t = inner.tanh();
    let y = half * x * (T::one() + t);
    let dy = half * (T::one() + t)
        + half * x * (T::one() - t * t) * c * (T::one() + T::lit(3.0) * a * x * x);
    (y, dy)
}

/// `c = a * b + beta * c`; each operand is given as `(row stride, col stride)`.
#[allow(clippy::too_many_arguments)]
fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    sa: (usize, usize),
    b: &[T],
    sb: (usize, usize),
    c: &mut [T],
    beta: T,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: slice lengths are checked above and the strides describe
    // row-major or transposed views inside those slices; `c` is a distinct
    // mutable borrow.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::check_gradients;
    use rand::Rng;

    fn random(store: &mut ParamStore<f64>, name: &str, shape: Vec<usize>, seed: u64) -> ParamId {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0));
        store.add(name, t).unwrap()
    }

    fn all_entries(store: &ParamStore<f64>) -> Vec<(ParamId, usize)> {
        store
            .ids()
            .flat_map(|id| (0..store.get(id).len()).map(move |i| (id, i)))
            .collect()
    }

    fn assert_close(checks: &[crate::numerics::gradcheck::GradCheck]) {
        for c in checks {
            assert!(c.relative_error(1e-6) < 1e-5, "{c:?}");
        }
    }

    #[test]
    fn matmul_value() {
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let a = g.input(Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let b = g.input(Tensor::new(vec![3, 2], vec![7., 8., 9., 10., 11., 12.]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c), &[58., 64., 139., 154.]);
        let bt = g.transpose(b).unwrap();
        let c2 = g.matmul_t(a, bt).unwrap();
        assert_eq!(g.value(c2), g.value(c));
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::full(vec![1, 4], 3.0));
        let gam = g.input(Tensor::full(vec![4], 1.0));
        let bet = g.input(Tensor::zeros(vec![4]));
        let y = g.layer_norm(x, gam, bet).unwrap();
        assert!(g.value(y).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn dense_ops_gradients() {
        let mut store = ParamStore::new();
        let x = random(&mut store, "x", vec![3, 4], 1);
        let w = random(&mut store, "w", vec![4, 5], 2);
        let b = random(&mut store, "b", vec![5], 3);
        let v = random(&mut store, "v", vec![2, 5], 4);
        let gam = random(&mut store, "gamma", vec![5], 5);
        let bet = random(&mut store, "beta", vec![5], 6);
        let entries = all_entries(&store);
        let checks = check_gradients(&mut store, &entries, 1e-6, |g| {
            let (x, w, b, v) = (g.param(x), g.param(w), g.param(b), g.param(v));
            let (gam, bet) = (g.param(gam), g.param(bet));
            let h = g.matmul(x, w)?;
            let h = g.add_row(h, b)?;
            let h = g.layer_norm(h, gam, bet)?;
            let h = g.gelu(h);
            let s = g.matmul_t(h, v)?;
            let s = g.softmax(s);
            let t = g.tanh(s);
            let tt = g.transpose(t)?;
            let sq = g.mul(tt, tt)?;
            let l = g.log_sigmoid(sq);
            let l2 = g.scale(l, 0.7);
            let l3 = g.add(l2, tt)?;
            Ok(g.mean(l3))
        })
        .unwrap();
        assert_close(&checks);
    }

    #[test]
    fn structural_ops_gradients() {
        let mut store = ParamStore::new();
        let table = random(&mut store, "table", vec![5, 3], 7);
        let a = random(&mut store, "a", vec![2, 3], 8);
        let entries = all_entries(&store);
        let checks = check_gradients(&mut store, &entries, 1e-6, |g| {
            let (t, a) = (g.param(table), g.param(a));
            let e = g.embedding(t, &[4, 1, 4])?;
            let rows = g.concat_rows(&[e, a])?;
            let cols = g.concat_cols(&[rows, rows])?;
            let sc = g.slice_cols(cols, 2, 5)?;
            let sr = g.slice_rows(sc, 1, 4)?;
            let sr = g.reshape(sr, vec![9])?;
            let sq = g.mul(sr, sr)?;
            Ok(g.sum(sq))
        })
        .unwrap();
        assert_close(&checks);
    }

    #[test]
    fn fused_losses_gradients() {
        let mut store = ParamStore::new();
        let logits = random(&mut store, "logits", vec![3, 4], 9);
        let mix = random(&mut store, "mix", vec![3, 6], 10);
        let entries = all_entries(&store);
        let checks = check_gradients(&mut store, &entries, 1e-6, |g| {
            let (lg, mx) = (g.param(logits), g.param(mix));
            let ce = g.cross_entropy(lg, &[0, 3, 1])?;
            let nll = g.mixture_nll(mx, &[-0.3, 0.9, 0.02], 256)?;
            let both = g.concat_rows(&[ce, nll])?;
            Ok(g.sum(both))
        })
        .unwrap();
        assert_close(&checks);
    }

    #[test]
    fn backward_twice_accumulates() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::new(vec![2], vec![1.0, -2.0]).unwrap()).unwrap();
        let mut g = Graph::new(&store);
        let p = g.param(w);
        let sq = g.mul(p, p).unwrap();
        let l = g.sum(sq);
        g.backward(l).unwrap();
        assert_eq!(g.param_grads().get(w).unwrap(), &[2.0, -4.0]);
        g.backward(l).unwrap();
        assert_eq!(g.param_grads().get(w).unwrap(), &[4.0, -8.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let x = g.input_with_grad(Tensor::zeros(vec![2, 2]));
        assert!(matches!(g.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn dropout_identity_in_eval() {
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::full(vec![10], 1.0));
        assert_eq!(g.dropout(x, 0.5), x);
        let mut g = Graph::training(&store, 1);
        let x = g.input(Tensor::full(vec![1000], 1.0));
        let y = g.dropout(x, 0.5);
        let mean = g.value(y).iter().sum::<f64>() / 1000.0;
        assert!((mean - 1.0).abs() < 0.15);
        assert!(g.value(y).iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn input_gradient_readable() {
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let x = g.input_with_grad(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let s = g.scale(x, 3.0);
        let l = g.sum(s);
        g.backward(l).unwrap();
        assert_eq!(g.input_grad(x).unwrap(), &[3.0, 3.0, 3.0]);
    }

    #[test]
    fn f32_graph_runs() {
        let mut store = ParamStore::<f32>::new();
        let w = store.add("w", Tensor::full(vec![2, 2], 0.5f32)).unwrap();
        let mut g = Graph::new(&store);
        let p = g.param(w);
        let m = g.matmul(p, p).unwrap();
        let l = g.sum(m);
        assert!((g.scalar(l) - 2.0).abs() < 1e-6);
        g.backward(l).unwrap();
    }
}
