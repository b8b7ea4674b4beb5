//! A small reverse-mode tape over dense matrices.
//!
//! Every op computes its value eagerly on push and records enough of its
//! inputs to produce the vector-Jacobian product later. `backward` walks the
//! nodes in exact reverse order of recording. Parameters are leaves tagged
//! with a key; gradients of all leaves sharing a key are summed into one
//! accumulator slot.

use std::collections::BTreeMap;

use super::dense::{dot, DenseMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<K> {
    Constant,
    Param(K),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var, Option<Vec<bool>>),
    NormalizeRows(Var),
    Sum(Var),
    Transpose(Var),
    Reshape(Var),
    Rows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
}

#[derive(Clone, Debug)]
struct Node<K> {
    op: Op<K>,
    value: DenseMatrix,
}

/// Result of one backward pass.
#[derive(Debug)]
pub struct TapeGradients<K> {
    node_grads: Vec<Option<DenseMatrix>>,
    params: BTreeMap<K, DenseMatrix>,
    visit_order: Vec<usize>,
}

impl<K: Ord> TapeGradients<K> {
    pub fn wrt(&self, v: Var) -> Option<&DenseMatrix> {
        self.node_grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn param(&self, key: &K) -> Option<&DenseMatrix> {
        self.params.get(key)
    }

    pub fn params(&self) -> &BTreeMap<K, DenseMatrix> {
        &self.params
    }

    /// Node indices in the order the backward pass processed them.
    pub fn visit_order(&self) -> &[usize] {
        &self.visit_order
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradTape<K> {
    nodes: Vec<Node<K>>,
}

impl<K: Copy + Ord> GradTape<K> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, op: Op<K>, value: DenseMatrix) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!(
                "tape node {} produced a non-finite value",
                self.nodes.len()
            )));
        }
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: DenseMatrix) -> Result<Var> {
        self.push(Op::Constant, value)
    }

    pub fn param(&mut self, key: K, value: DenseMatrix) -> Result<Var> {
        self.push(Op::Param(key), value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul(a, b), v)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::shape(op, x.shape_str(), y.shape_str()));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> DenseMatrix {
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        DenseMatrix::from_vec(x.rows(), x.cols(), data).expect("same shape")
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let x = self.value(a);
        let data = x.data().iter().map(|&p| f(p)).collect();
        DenseMatrix::from_vec(x.rows(), x.cols(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.zip_with(a, b, |p, q| p + q);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_with(a, b, |p, q| p - q);
        self.push(Op::Sub(a, b), v)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_with(a, b, |p, q| p * q);
        self.push(Op::Mul(a, b), v)
    }

    pub fn scale(&mut self, a: Var, alpha: f64) -> Result<Var> {
        let v = self.map(a, |p| alpha * p);
        self.push(Op::Scale(a, alpha), v)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let v = self.map(a, f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let v = self.map(a, f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let v = self.map(a, f64::ln);
        self.push(Op::Log(a), v)
    }

    fn check_mask(&self, a: Var, mask: Option<&[bool]>) -> Result<()> {
        if let Some(m) = mask {
            let cols = self.value(a).cols();
            if m.len() != cols {
                return Err(Error::shape("row mask", format!("{cols} cols"), m.len()));
            }
            if !m.iter().any(|&b| b) {
                return Err(Error::EmptySequence);
            }
        }
        Ok(())
    }

    /// Row-wise softmax; masked-out columns get probability 0.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<Vec<bool>>) -> Result<Var> {
        self.check_mask(a, mask.as_deref())?;
        let v = softmax_rows_value(self.value(a), mask.as_deref());
        self.push(Op::SoftmaxRows(a), v)
    }

    /// Row-wise log-softmax; masked-out columns get value 0 and no gradient.
    pub fn log_softmax_rows(&mut self, a: Var, mask: Option<Vec<bool>>) -> Result<Var> {
        self.check_mask(a, mask.as_deref())?;
        let x = self.value(a);
        let mut out = DenseMatrix::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            let row = x.row(r);
            let keep = |j: usize| mask.as_ref().is_none_or(|m| m[j]);
            let max = (0..row.len())
                .filter(|&j| keep(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            let lse = max
                + (0..row.len())
                    .filter(|&j| keep(j))
                    .map(|j| (row[j] - max).exp())
                    .sum::<f64>()
                    .ln();
            for j in (0..row.len()).filter(|&j| keep(j)) {
                out[(r, j)] = row[j] - lse;
            }
        }
        self.push(Op::LogSoftmaxRows(a, mask), out)
    }

    /// L2-normalizes each row.
    pub fn normalize_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let mut out = x.clone();
        for r in 0..x.rows() {
            let n = dot(x.row(r), x.row(r)).sqrt();
            if n == 0.0 {
                return Err(Error::ZeroNorm(format!("row {r} of tape node {}", a.0)));
            }
            out.row_mut(r).iter_mut().for_each(|v| *v /= n);
        }
        self.push(Op::NormalizeRows(a), out)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), DenseMatrix::from_vec(1, 1, vec![s])?)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v)
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let v = DenseMatrix::from_vec(rows, cols, self.value(a).data().to_vec())?;
        self.push(Op::Reshape(a), v)
    }

    /// Gathers rows by index; repeated indices are allowed.
    pub fn rows(&mut self, a: Var, idx: Vec<usize>) -> Result<Var> {
        let x = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * x.cols());
        for &i in &idx {
            if i >= x.rows() {
                return Err(Error::shape("rows", x.shape_str(), format!("row {i}")));
            }
            data.extend_from_slice(x.row(i));
        }
        let v = DenseMatrix::from_vec(idx.len(), x.cols(), data)?;
        self.push(Op::Rows(a, idx), v)
    }

    pub fn concat_rows(&mut self, parts: Vec<Var>) -> Result<Var> {
        let cols = parts
            .first()
            .map(|&p| self.value(p).cols())
            .ok_or_else(|| Error::Invalid("concat of zero parts".into()))?;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in &parts {
            let x = self.value(p);
            if x.cols() != cols {
                return Err(Error::shape("concat_rows", cols, x.shape_str()));
            }
            data.extend_from_slice(x.data());
            rows += x.rows();
        }
        let v = DenseMatrix::from_vec(rows, cols, data)?;
        self.push(Op::ConcatRows(parts), v)
    }

    /// Reverse pass seeded with ones at `output`. Accumulators are fresh on
    /// every call, so the tape can be replayed.
    pub fn backward(&self, output: Var) -> TapeGradients<K> {
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        let out = &self.nodes[output.0].value;
        let mut seed = DenseMatrix::zeros(out.rows(), out.cols());
        seed.fill(1.0);
        grads[output.0] = Some(seed);

        let mut params: BTreeMap<K, DenseMatrix> = BTreeMap::new();
        let mut visit_order = Vec::with_capacity(output.0 + 1);

        for idx in (0..=output.0).rev() {
            visit_order.push(idx);
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(key) => match params.get_mut(key) {
                    Some(acc) => acc.axpy(1.0, &g).expect("param shapes agree"),
                    None => {
                        params.insert(*key, g.clone());
                    }
                },
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = g.matmul(&bv.transpose()).expect("matmul shapes");
                    let gb = av.transpose().matmul(&g).expect("matmul shapes");
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    let mut neg = g.clone();
                    neg.scale(-1.0);
                    accumulate(&mut grads, *b, neg);
                }
                Op::Mul(a, b) => {
                    let ga = hadamard(&g, self.value(*b));
                    let gb = hadamard(&g, self.value(*a));
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, alpha) => {
                    let mut ga = g.clone();
                    ga.scale(*alpha);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let mut ga = g.clone();
                    for (x, y) in ga.data_mut().iter_mut().zip(node.value.data()) {
                        *x *= 1.0 - y * y;
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = hadamard(&g, &node.value);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Log(a) => {
                    let mut ga = g.clone();
                    for (x, y) in ga.data_mut().iter_mut().zip(self.value(*a).data()) {
                        *x /= y;
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let p = &node.value;
                    let mut ga = DenseMatrix::zeros(p.rows(), p.cols());
                    for r in 0..p.rows() {
                        let s = dot(g.row(r), p.row(r));
                        for j in 0..p.cols() {
                            ga[(r, j)] = p[(r, j)] * (g[(r, j)] - s);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::LogSoftmaxRows(a, mask) => {
                    let y = &node.value;
                    let mut ga = DenseMatrix::zeros(y.rows(), y.cols());
                    let keep = |j: usize| mask.as_ref().is_none_or(|m| m[j]);
                    for r in 0..y.rows() {
                        let s: f64 = (0..y.cols()).filter(|&j| keep(j)).map(|j| g[(r, j)]).sum();
                        for j in (0..y.cols()).filter(|&j| keep(j)) {
                            ga[(r, j)] = g[(r, j)] - y[(r, j)].exp() * s;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::NormalizeRows(a) => {
                    let x = self.value(*a);
                    let u = &node.value;
                    let mut ga = DenseMatrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let n = dot(x.row(r), x.row(r)).sqrt();
                        let gu = dot(g.row(r), u.row(r));
                        for j in 0..x.cols() {
                            ga[(r, j)] = (g[(r, j)] - gu * u[(r, j)]) / n;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let x = self.value(*a);
                    let mut ga = DenseMatrix::zeros(x.rows(), x.cols());
                    ga.fill(g.data()[0]);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Reshape(a) => {
                    let x = self.value(*a);
                    let ga = DenseMatrix::from_vec(x.rows(), x.cols(), g.data().to_vec())
                        .expect("reshape preserves length");
                    accumulate(&mut grads, *a, ga);
                }
                Op::Rows(a, idx) => {
                    let x = self.value(*a);
                    let mut ga = DenseMatrix::zeros(x.rows(), x.cols());
                    for (r, &i) in idx.iter().enumerate() {
                        for (d, s) in ga.row_mut(i).iter_mut().zip(g.row(r)) {
                            *d += s;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let x = self.value(p);
                        let n = x.rows() * x.cols();
                        let slice = g.data()[offset..offset + n].to_vec();
                        offset += n;
                        let gp = DenseMatrix::from_vec(x.rows(), x.cols(), slice).expect("part");
                        accumulate(&mut grads, p, gp);
                    }
                }
            }
            grads[idx] = Some(g);
        }

        TapeGradients {
            node_grads: grads,
            params,
            visit_order,
        }
    }
}

fn accumulate(grads: &mut [Option<DenseMatrix>], v: Var, g: DenseMatrix) {
    match &mut grads[v.0] {
        Some(acc) => acc.axpy(1.0, &g).expect("gradient shape matches node"),
        slot @ None => *slot = Some(g),
    }
}

fn hadamard(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    DenseMatrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

fn softmax_rows_value(x: &DenseMatrix, mask: Option<&[bool]>) -> DenseMatrix {
    let mut out = x.clone();
    for r in 0..x.rows() {
        match mask {
            Some(m) => super::dense::masked_softmax_in_place(out.row_mut(r), m),
            None => super::dense::softmax_in_place(out.row_mut(r)),
        }
    }
    out
}
