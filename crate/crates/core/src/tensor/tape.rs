use std::sync::Arc;

use rand::Rng;

use crate::scalar::Scalar;

use super::{matmul_nt_into, matmul_tn_into, Csr, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    SpMM(Arc<Csr<T>>, Var),
    WeightedSpMM {
        rows: Arc<Vec<usize>>,
        cols: Arc<Vec<usize>>,
        weights: Var,
        dense: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, T),
    AddScalar(Var, T),
    Relu(Var),
    LeakyRelu(Var, T),
    Exp(Var),
    Log(Var),
    Powf(Var, T),
    SoftmaxRows(Var),
    Sum(Var),
    RowSum(Var),
    ColSum(Var),
    Transpose(Var),
    ConcatCols(Var, Var),
    Dropout(Var, Vec<T>),
    TraceQuadratic(Var, Arc<Tensor<T>>),
    FrobeniusNorm(Var),
    CrossEntropy {
        logits: Var,
        rows: Arc<Vec<usize>>,
        targets: Arc<Vec<usize>>,
    },
    GatherRows(Var, Arc<Vec<usize>>),
    SegmentSoftmax(Var, Arc<Vec<usize>>),
    SegmentSum(Var, Arc<Vec<usize>>),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records a forward computation so that [`Tape::backward`] can produce
/// exact gradients for every parameter leaf.
///
/// Inputs always precede outputs on the tape, so reverse index order is a
/// reverse topological order.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Shape of `rhs` relative to `lhs` in a broadcasting elementwise op.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Bcast {
    Same,
    Row,
    Col,
    Scalar,
}

fn broadcast_kind(op: &'static str, a: [usize; 2], b: [usize; 2]) -> Result<Bcast, TensorError> {
    if a == b {
        Ok(Bcast::Same)
    } else if b == [1, 1] {
        Ok(Bcast::Scalar)
    } else if b[0] == 1 && b[1] == a[1] {
        Ok(Bcast::Row)
    } else if b[1] == 1 && b[0] == a[0] {
        Ok(Bcast::Col)
    } else {
        Err(TensorError::shape(op, a, b))
    }
}

#[inline]
fn bidx(kind: Bcast, r: usize, c: usize, cols: usize) -> usize {
    match kind {
        Bcast::Same => r * cols + c,
        Bcast::Row => c,
        Bcast::Col => r,
        Bcast::Scalar => 0,
    }
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

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, name: &'static str) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite(name));
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            op => inputs(op).iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::MatMul(a, b), "matmul")
    }

    /// Constant sparse matrix times a dense value.
    pub fn spmm(&mut self, s: &Arc<Csr<T>>, x: Var) -> Result<Var, TensorError> {
        let out = s.matmul(self.value(x))?;
        self.push(out, Op::SpMM(Arc::clone(s), x), "spmm")
    }

    /// `out[rows[e]] += weights[e] · dense[cols[e]]` for every entry `e`.
    /// `n_out` is the number of output rows.
    pub fn weighted_spmm(
        &mut self,
        n_out: usize,
        rows: &Arc<Vec<usize>>,
        cols: &Arc<Vec<usize>>,
        weights: Var,
        dense: Var,
    ) -> Result<Var, TensorError> {
        let w = self.value(weights);
        let d = self.value(dense);
        if w.shape() != [rows.len(), 1] || rows.len() != cols.len() {
            return Err(TensorError::shape("weighted spmm", w.shape(), [rows.len(), 1]));
        }
        let mut out = Tensor::zeros(n_out, d.cols());
        for e in 0..rows.len() {
            let (r, c) = (rows[e], cols[e]);
            if r >= n_out || c >= d.rows() {
                return Err(TensorError::Index {
                    index: r.max(c),
                    len: n_out.min(d.rows()),
                });
            }
            let we = w.data()[e];
            let src: Vec<T> = d.row(c).to_vec();
            for (o, s) in out.row_mut(r).iter_mut().zip(src) {
                *o += we * s;
            }
        }
        let op = Op::WeightedSpMM {
            rows: Arc::clone(rows),
            cols: Arc::clone(cols),
            weights,
            dense,
        };
        self.push(out, op, "weighted spmm")
    }

    fn elementwise(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        let kind = broadcast_kind(name, av.shape(), bv.shape())?;
        let cols = av.cols();
        let mut out = av.clone();
        for r in 0..av.rows() {
            for c in 0..cols {
                let i = r * cols + c;
                out.data_mut()[i] = f(av.data()[i], bv.data()[bidx(kind, r, c, cols)]);
            }
        }
        self.push(out, op, name)
    }

    /// `a + b`; `b` may broadcast as a row, a column or a scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Hadamard product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(a, b, "div", |x, y| x / y, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var, TensorError> {
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c), "scale")
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Result<Var, TensorError> {
        let out = self.value(a).map(|x| x + c);
        self.push(out, Op::AddScalar(a, c), "add scalar")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        let out = self.value(a).map(|x| x.max(T::zero()));
        self.push(out, Op::Relu(a), "relu")
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Result<Var, TensorError> {
        let out = self
            .value(a)
            .map(|x| if x > T::zero() { x } else { slope * x });
        self.push(out, Op::LeakyRelu(a, slope), "leaky relu")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, TensorError> {
        let out = self.value(a).map(T::exp);
        self.push(out, Op::Exp(a), "exp")
    }

    pub fn log(&mut self, a: Var) -> Result<Var, TensorError> {
        let out = self.value(a).map(T::ln);
        self.push(out, Op::Log(a), "log")
    }

    pub fn powf(&mut self, a: Var, p: T) -> Result<Var, TensorError> {
        let out = self.value(a).map(|x| x.powf(p));
        self.push(out, Op::Powf(a, p), "powf")
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        self.push(out, Op::SoftmaxRows(a), "softmax rows")
    }

    /// Sum of all entries, as `1×1`.
    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let n = self.value(a).len();
        let s = self.sum(a)?;
        self.scale(s, T::one() / T::of_usize(n))
    }

    /// `n×1` vector of row sums.
    pub fn row_sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let av = self.value(a);
        let out = Tensor::column((0..av.rows()).map(|r| av.row(r).iter().copied().sum()).collect());
        self.push(out, Op::RowSum(a), "row sum")
    }

    /// `1×k` vector of column sums.
    pub fn col_sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let av = self.value(a);
        let mut out = Tensor::zeros(1, av.cols());
        for r in 0..av.rows() {
            for (o, &x) in out.data_mut().iter_mut().zip(av.row(r)) {
                *o += x;
            }
        }
        self.push(out, Op::ColSum(a), "col sum")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a), "transpose")
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(TensorError::shape("concat cols", av.shape(), bv.shape()));
        }
        let mut data = Vec::with_capacity(av.len() + bv.len());
        for r in 0..av.rows() {
            data.extend_from_slice(av.row(r));
            data.extend_from_slice(bv.row(r));
        }
        let out = Tensor::from_vec(av.rows(), av.cols() + bv.cols(), data)?;
        self.push(out, Op::ConcatCols(a, b), "concat cols")
    }

    /// Inverted dropout: zeroes entries with probability `p`, rescales the
    /// rest by `1/(1−p)`. `p = 0` returns `a` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, rng: &mut R) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::Invalid(format!("dropout probability {p}")));
        }
        if p == 0.0 {
            return Ok(a);
        }
        let keep = T::of(1.0 / (1.0 - p));
        let av = self.value(a);
        let mask: Vec<T> = (0..av.len())
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
            .collect();
        let mut out = av.clone();
        for (o, &m) in out.data_mut().iter_mut().zip(&mask) {
            *o *= m;
        }
        self.push(out, Op::Dropout(a, mask), "dropout")
    }

    /// `Tr(Cᵀ B C)` for a constant square `B`.
    pub fn trace_quadratic(&mut self, c: Var, b: &Arc<Tensor<T>>) -> Result<Var, TensorError> {
        let cv = self.value(c);
        if b.rows() != b.cols() || b.cols() != cv.rows() {
            return Err(TensorError::shape("trace quadratic", b.shape(), cv.shape()));
        }
        let bc = b.matmul(cv)?;
        let tr = cv.data().iter().zip(bc.data()).map(|(&x, &y)| x * y).sum();
        self.push(Tensor::scalar(tr), Op::TraceQuadratic(c, Arc::clone(b)), "trace quadratic")
    }

    pub fn frobenius_norm(&mut self, a: Var) -> Result<Var, TensorError> {
        let out = Tensor::scalar(self.value(a).frobenius_norm());
        self.push(out, Op::FrobeniusNorm(a), "frobenius norm")
    }

    /// Mean softmax cross-entropy of `logits[rows[i]]` against `targets[i]`.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        rows: &Arc<Vec<usize>>,
        targets: &Arc<Vec<usize>>,
    ) -> Result<Var, TensorError> {
        let lv = self.value(logits);
        if rows.len() != targets.len() || rows.is_empty() {
            return Err(TensorError::Invalid(format!(
                "cross entropy over {} rows with {} targets",
                rows.len(),
                targets.len()
            )));
        }
        let mut total = T::zero();
        for (&r, &t) in rows.iter().zip(targets.iter()) {
            if r >= lv.rows() {
                return Err(TensorError::Index { index: r, len: lv.rows() });
            }
            if t >= lv.cols() {
                return Err(TensorError::Index { index: t, len: lv.cols() });
            }
            let row = lv.row(r);
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = mx + row.iter().map(|&x| (x - mx).exp()).sum::<T>().ln();
            total += lse - row[t];
        }
        let out = Tensor::scalar(total / T::of_usize(rows.len()));
        let op = Op::CrossEntropy {
            logits,
            rows: Arc::clone(rows),
            targets: Arc::clone(targets),
        };
        self.push(out, op, "cross entropy")
    }

    pub fn gather_rows(&mut self, a: Var, idx: &Arc<Vec<usize>>) -> Result<Var, TensorError> {
        let av = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * av.cols());
        for &i in idx.iter() {
            if i >= av.rows() {
                return Err(TensorError::Index { index: i, len: av.rows() });
            }
            data.extend_from_slice(av.row(i));
        }
        let out = Tensor::from_vec(idx.len(), av.cols(), data)?;
        self.push(out, Op::GatherRows(a, Arc::clone(idx)), "gather rows")
    }

    /// Softmax of an `E×1` column within each segment
    /// `offsets[s]..offsets[s+1]`.
    pub fn segment_softmax(&mut self, a: Var, offsets: &Arc<Vec<usize>>) -> Result<Var, TensorError> {
        let av = self.value(a);
        check_segments(av, offsets, "segment softmax")?;
        let mut out = av.clone();
        for s in 0..offsets.len() - 1 {
            softmax_in_place(&mut out.data_mut()[offsets[s]..offsets[s + 1]]);
        }
        self.push(out, Op::SegmentSoftmax(a, Arc::clone(offsets)), "segment softmax")
    }

    /// Sums the rows of each segment into one output row.
    pub fn segment_sum(&mut self, a: Var, offsets: &Arc<Vec<usize>>) -> Result<Var, TensorError> {
        let av = self.value(a);
        if offsets.last().copied() != Some(av.rows()) {
            return Err(TensorError::Invalid("segment offsets do not cover rows".into()));
        }
        let segs = offsets.len() - 1;
        let mut out = Tensor::zeros(segs, av.cols());
        for s in 0..segs {
            for e in offsets[s]..offsets[s + 1] {
                let src: Vec<T> = av.row(e).to_vec();
                for (o, x) in out.row_mut(s).iter_mut().zip(src) {
                    *o += x;
                }
            }
        }
        self.push(out, Op::SegmentSum(a, Arc::clone(offsets)), "segment sum")
    }

    /// Reverse sweep from a `1×1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, TensorError> {
        let shape = self.value(loss).shape();
        if shape != [1, 1] {
            return Err(TensorError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            for (input, contrib) in self.local_grads(i, &g) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => {
                        for (a, c) in acc.data_mut().iter_mut().zip(contrib.data()) {
                            *a += *c;
                        }
                    }
                    slot => *slot = Some(contrib),
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn local_grads(&self, i: usize, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let node = &self.nodes[i];
        let y = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let mut out = Vec::new();
                if needs(*a) {
                    let mut ga = Tensor::zeros(val(*a).rows(), val(*a).cols());
                    matmul_nt_into(g, val(*b), &mut ga);
                    out.push((*a, ga));
                }
                if needs(*b) {
                    let mut gb = Tensor::zeros(val(*b).rows(), val(*b).cols());
                    matmul_tn_into(val(*a), g, &mut gb);
                    out.push((*b, gb));
                }
                out
            }
            Op::SpMM(s, x) => vec![(*x, s.transpose_matmul(g).expect("shapes checked"))],
            Op::WeightedSpMM {
                rows,
                cols,
                weights,
                dense,
            } => {
                let d = val(*dense);
                let w = val(*weights);
                let mut out = Vec::new();
                if needs(*weights) {
                    let gw: Vec<T> = (0..rows.len())
                        .map(|e| {
                            g.row(rows[e])
                                .iter()
                                .zip(d.row(cols[e]))
                                .map(|(&a, &b)| a * b)
                                .sum()
                        })
                        .collect();
                    out.push((*weights, Tensor::column(gw)));
                }
                if needs(*dense) {
                    let mut gd = Tensor::zeros(d.rows(), d.cols());
                    for e in 0..rows.len() {
                        let we = w.data()[e];
                        let src: Vec<T> = g.row(rows[e]).to_vec();
                        for (o, s) in gd.row_mut(cols[e]).iter_mut().zip(src) {
                            *o += we * s;
                        }
                    }
                    out.push((*dense, gd));
                }
                out
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -T::one() } else { T::one() };
                let kind = broadcast_kind("", val(*a).shape(), val(*b).shape()).expect("checked");
                let gb = reduce_broadcast(kind, g, val(*b).shape(), |_, gv| sign * gv);
                vec![(*a, g.clone()), (*b, gb)]
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let kind = broadcast_kind("", av.shape(), bv.shape()).expect("checked");
                let cols = av.cols();
                let mut ga = g.clone();
                for r in 0..av.rows() {
                    for c in 0..cols {
                        ga.data_mut()[r * cols + c] *= bv.data()[bidx(kind, r, c, cols)];
                    }
                }
                let gb = reduce_broadcast(kind, g, bv.shape(), |i, gv| gv * av.data()[i]);
                vec![(*a, ga), (*b, gb)]
            }
            Op::Div(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let kind = broadcast_kind("", av.shape(), bv.shape()).expect("checked");
                let cols = av.cols();
                let mut ga = g.clone();
                for r in 0..av.rows() {
                    for c in 0..cols {
                        ga.data_mut()[r * cols + c] /= bv.data()[bidx(kind, r, c, cols)];
                    }
                }
                let gb = reduce_broadcast(kind, g, bv.shape(), |i, gv| {
                    let r = i / cols;
                    let c = i % cols;
                    let b = bv.data()[bidx(kind, r, c, cols)];
                    -gv * av.data()[i] / (b * b)
                });
                vec![(*a, ga), (*b, gb)]
            }
            Op::Scale(a, c) => vec![(*a, g.map(|x| x * *c))],
            Op::AddScalar(a, _) => vec![(*a, g.clone())],
            Op::Relu(a) => vec![(*a, zip_map(g, val(*a), |gv, x| if x > T::zero() { gv } else { T::zero() }))],
            Op::LeakyRelu(a, s) => vec![(*a, zip_map(g, val(*a), |gv, x| if x > T::zero() { gv } else { gv * *s }))],
            Op::Exp(a) => vec![(*a, zip_map(g, y, |gv, e| gv * e))],
            Op::Log(a) => vec![(*a, zip_map(g, val(*a), |gv, x| gv / x))],
            Op::Powf(a, p) => vec![(
                *a,
                zip_map(g, val(*a), |gv, x| gv * *p * x.powf(*p - T::one())),
            )],
            Op::SoftmaxRows(a) => {
                let mut ga = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    softmax_backward(y.row(r), g.row(r), ga.row_mut(r));
                }
                vec![(*a, ga)]
            }
            Op::Sum(a) => {
                let av = val(*a);
                vec![(*a, Tensor::full(av.rows(), av.cols(), g.item()))]
            }
            Op::RowSum(a) => {
                let av = val(*a);
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    let gr = g.data()[r];
                    ga.row_mut(r).iter_mut().for_each(|x| *x = gr);
                }
                vec![(*a, ga)]
            }
            Op::ColSum(a) => {
                let av = val(*a);
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    ga.row_mut(r).copy_from_slice(g.data());
                }
                vec![(*a, ga)]
            }
            Op::Transpose(a) => vec![(*a, g.transpose())],
            Op::ConcatCols(a, b) => {
                let (ac, bc) = (val(*a).cols(), val(*b).cols());
                let rows = g.rows();
                let mut ga = Tensor::zeros(rows, ac);
                let mut gb = Tensor::zeros(rows, bc);
                for r in 0..rows {
                    ga.row_mut(r).copy_from_slice(&g.row(r)[..ac]);
                    gb.row_mut(r).copy_from_slice(&g.row(r)[ac..]);
                }
                vec![(*a, ga), (*b, gb)]
            }
            Op::Dropout(a, mask) => {
                let mut ga = g.clone();
                for (x, &m) in ga.data_mut().iter_mut().zip(mask) {
                    *x *= m;
                }
                vec![(*a, ga)]
            }
            Op::TraceQuadratic(c, b) => {
                let cv = val(*c);
                let mut gc = b.matmul(cv).expect("checked");
                matmul_tn_into(b, cv, &mut gc);
                let s = g.item();
                gc.data_mut().iter_mut().for_each(|x| *x *= s);
                vec![(*c, gc)]
            }
            Op::FrobeniusNorm(a) => {
                let norm = y.item();
                let s = g.item();
                let ga = if norm > T::zero() {
                    val(*a).map(|x| s * x / norm)
                } else {
                    Tensor::zeros(val(*a).rows(), val(*a).cols())
                };
                vec![(*a, ga)]
            }
            Op::CrossEntropy {
                logits,
                rows,
                targets,
            } => {
                let lv = val(*logits);
                let mut gl = Tensor::zeros(lv.rows(), lv.cols());
                let s = g.item() / T::of_usize(rows.len());
                for (&r, &t) in rows.iter().zip(targets.iter()) {
                    let mut p = lv.row(r).to_vec();
                    softmax_in_place(&mut p);
                    p[t] -= T::one();
                    for (o, pv) in gl.row_mut(r).iter_mut().zip(p) {
                        *o += s * pv;
                    }
                }
                vec![(*logits, gl)]
            }
            Op::GatherRows(a, idx) => {
                let av = val(*a);
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                for (e, &i) in idx.iter().enumerate() {
                    let src: Vec<T> = g.row(e).to_vec();
                    for (o, x) in ga.row_mut(i).iter_mut().zip(src) {
                        *o += x;
                    }
                }
                vec![(*a, ga)]
            }
            Op::SegmentSoftmax(a, offsets) => {
                let mut ga = Tensor::zeros(y.rows(), 1);
                for s in 0..offsets.len() - 1 {
                    let span = offsets[s]..offsets[s + 1];
                    softmax_backward(
                        &y.data()[span.clone()],
                        &g.data()[span.clone()],
                        &mut ga.data_mut()[span],
                    );
                }
                vec![(*a, ga)]
            }
            Op::SegmentSum(a, offsets) => {
                let av = val(*a);
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                for s in 0..offsets.len() - 1 {
                    for e in offsets[s]..offsets[s + 1] {
                        ga.row_mut(e).copy_from_slice(g.row(s));
                    }
                }
                vec![(*a, ga)]
            }
        }
    }
}

fn inputs<T>(op: &Op<T>) -> Vec<Var> {
    match op {
        Op::Leaf => vec![],
        Op::MatMul(a, b)
        | Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::Div(a, b)
        | Op::ConcatCols(a, b) => vec![*a, *b],
        Op::WeightedSpMM { weights, dense, .. } => vec![*weights, *dense],
        Op::SpMM(_, a)
        | Op::Scale(a, _)
        | Op::AddScalar(a, _)
        | Op::Relu(a)
        | Op::LeakyRelu(a, _)
        | Op::Exp(a)
        | Op::Log(a)
        | Op::Powf(a, _)
        | Op::SoftmaxRows(a)
        | Op::Sum(a)
        | Op::RowSum(a)
        | Op::ColSum(a)
        | Op::Transpose(a)
        | Op::Dropout(a, _)
        | Op::TraceQuadratic(a, _)
        | Op::FrobeniusNorm(a)
        | Op::GatherRows(a, _)
        | Op::SegmentSoftmax(a, _)
        | Op::SegmentSum(a, _) => vec![*a],
        Op::CrossEntropy { logits, .. } => vec![*logits],
    }
}

fn check_segments<T: Scalar>(
    av: &Tensor<T>,
    offsets: &[usize],
    name: &'static str,
) -> Result<(), TensorError> {
    if av.cols() != 1 {
        return Err(TensorError::shape(name, av.shape(), [av.rows(), 1]));
    }
    if offsets.first() != Some(&0) || offsets.last() != Some(&av.rows()) {
        return Err(TensorError::Invalid(format!("{name}: offsets do not cover rows")));
    }
    Ok(())
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    if row.is_empty() {
        return;
    }
    let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for x in row.iter_mut() {
        *x = (*x - mx).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

fn softmax_backward<T: Scalar>(y: &[T], g: &[T], out: &mut [T]) {
    let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
    for ((o, &yv), &gv) in out.iter_mut().zip(y).zip(g) {
        *o = yv * (gv - dot);
    }
}

fn zip_map<T: Scalar>(g: &Tensor<T>, x: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let mut out = g.clone();
    for (o, &xv) in out.data_mut().iter_mut().zip(x.data()) {
        *o = f(*o, xv);
    }
    out
}

/// Sums `f(i, g[i])` over broadcast dimensions back down to `shape`.
fn reduce_broadcast<T: Scalar>(
    kind: Bcast,
    g: &Tensor<T>,
    shape: [usize; 2],
    f: impl Fn(usize, T) -> T,
) -> Tensor<T> {
    let cols = g.cols();
    let mut out = Tensor::zeros(shape[0], shape[1]);
    for r in 0..g.rows() {
        for c in 0..cols {
            let i = r * cols + c;
            out.data_mut()[bidx(kind, r, c, cols)] += f(i, g.data()[i]);
        }
    }
    out
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` did not
    /// influence the loss.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor<T>) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.rows(), like.cols()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_gradient() {
        let mut t = Tape::<f64>::new();
        let x = t.param(Tensor::scalar(3.0));
        let y = t.mul(x, x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::zeros(1, 2));
        let s = t.softmax_rows(x).unwrap();
        assert_eq!(t.value(s).data(), &[0.5, 0.5]);
    }

    #[test]
    fn cross_entropy_gradient_is_p_minus_onehot() {
        let logits = Tensor::from_rows(&[vec![0.3, -1.2, 2.0], vec![1.0, 0.0, -0.5]]).unwrap();
        let mut t = Tape::<f64>::new();
        let l = t.param(logits.clone());
        let rows = Arc::new(vec![0]);
        let targets = Arc::new(vec![1]);
        let loss = t.cross_entropy(l, &rows, &targets).unwrap();
        let g = t.backward(loss).unwrap();
        let mut p = logits.row(0).to_vec();
        softmax_in_place(&mut p);
        p[1] -= 1.0;
        let got = g.get(l).unwrap();
        for j in 0..3 {
            assert!((got.get(0, j) - p[j]).abs() < 1e-12);
            assert_eq!(got.get(1, j), 0.0);
        }
        // composite route: −log softmax picks the same value
        let mut t2 = Tape::<f64>::new();
        let l2 = t2.param(logits);
        let s = t2.softmax_rows(l2).unwrap();
        let ls = t2.log(s).unwrap();
        let pick = t2.constant(Tensor::from_rows(&[vec![0.0, -1.0, 0.0], vec![0.0; 3]]).unwrap());
        let prod = t2.mul(ls, pick).unwrap();
        let loss2 = t2.sum(prod).unwrap();
        assert!((t2.value(loss2).item() - t.value(loss).item()).abs() < 1e-12);
    }

    #[test]
    fn dropout_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = Tape::<f64>::new();
        let x = t.param(Tensor::full(3, 3, 2.0));
        let y = t.dropout(x, 0.0, &mut rng).unwrap();
        assert_eq!(x, y);
        let z = t.dropout(x, 0.5, &mut rng).unwrap();
        assert!(t.value(z).data().iter().all(|&v| v == 0.0 || v == 4.0));
    }

    #[test]
    fn trace_quadratic_singleton_partition_of_single_edge() {
        let b = Arc::new(Tensor::from_rows(&[vec![-0.5, 0.5], vec![0.5, -0.5]]).unwrap());
        let mut t = Tape::<f64>::new();
        let c = t.param(Tensor::identity(2));
        let tr = t.trace_quadratic(c, &b).unwrap();
        assert_eq!(t.value(tr).item(), -1.0);
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let mut t = Tape::<f64>::new();
        let a = t.constant(Tensor::zeros(2, 3));
        let b = t.constant(Tensor::zeros(2, 2));
        match t.add(a, b) {
            Err(TensorError::Shape { lhs, rhs, .. }) => {
                assert_eq!((lhs, rhs), ([2, 3], [2, 2]));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::<f64>::new();
        let a = t.param(Tensor::zeros(2, 1));
        assert!(matches!(t.backward(a), Err(TensorError::NonScalarLoss([2, 1]))));
    }

    #[test]
    fn non_finite_values_are_errors() {
        let mut t = Tape::<f64>::new();
        let a = t.param(Tensor::zeros(1, 1));
        assert_eq!(t.log(a), Err(TensorError::NonFinite("log")));
    }

    #[test]
    fn segment_softmax_rows_sum_to_one() {
        let mut t = Tape::<f64>::new();
        let e = t.param(Tensor::column(vec![0.1, 2.0, -1.0, 5.0, 0.0]));
        let off = Arc::new(vec![0, 1, 3, 5]);
        let a = t.segment_softmax(e, &off).unwrap();
        let v = t.value(a).data().to_vec();
        assert_eq!(v[0], 1.0);
        assert!((v[1] + v[2] - 1.0).abs() < 1e-12);
        assert!((v[3] + v[4] - 1.0).abs() < 1e-12);
    }
}
