use std::sync::Arc;

use rand::Rng;

use crate::graph::Graph;
use crate::scalar::Scalar;
use crate::tensor::{Csr, Tape, Tensor, TensorError, Var};

use super::ModelError;

/// `D^{-1/2} A D^{-1/2}`, with `A ← A + I` when `self_loops` is set.
pub fn normalize_adjacency<T: Scalar>(g: &Graph, self_loops: bool) -> Result<Csr<T>, ModelError> {
    let extra = usize::from(self_loops);
    let mut inv_sqrt = Vec::with_capacity(g.n());
    for u in 0..g.n() {
        let d = g.degree(u) + extra;
        if d == 0 {
            return Err(ModelError::IsolatedNode(u));
        }
        inv_sqrt.push(T::one() / T::of_usize(d).sqrt());
    }
    let mut triplets = Vec::with_capacity(2 * g.m() + g.n() * extra);
    for u in 0..g.n() {
        if self_loops {
            triplets.push((u, u, inv_sqrt[u] * inv_sqrt[u]));
        }
        for &v in g.neighbors(u) {
            triplets.push((u, v, inv_sqrt[u] * inv_sqrt[v]));
        }
    }
    Ok(Csr::from_triplets(g.n(), g.n(), triplets))
}

/// Row-normalized `D^{-1} A`; isolated rows stay zero.
pub fn mean_aggregator<T: Scalar>(g: &Graph) -> Csr<T> {
    let mut triplets = Vec::with_capacity(2 * g.m());
    for u in 0..g.n() {
        let d = g.degree(u);
        for &v in g.neighbors(u) {
            triplets.push((u, v, T::one() / T::of_usize(d)));
        }
    }
    Csr::from_triplets(g.n(), g.n(), triplets)
}

/// Attention neighborhoods `N(i) ∪ {i}` flattened by target node.
#[derive(Clone, Debug)]
pub struct AttentionEdges {
    pub rows: Arc<Vec<usize>>,
    pub cols: Arc<Vec<usize>>,
    pub offsets: Arc<Vec<usize>>,
}

impl AttentionEdges {
    pub fn new(g: &Graph) -> Self {
        let mut rows = Vec::with_capacity(2 * g.m() + g.n());
        let mut cols = Vec::with_capacity(2 * g.m() + g.n());
        let mut offsets = Vec::with_capacity(g.n() + 1);
        offsets.push(0);
        for i in 0..g.n() {
            rows.push(i);
            cols.push(i);
            for &j in g.neighbors(i) {
                rows.push(i);
                cols.push(j);
            }
            offsets.push(rows.len());
        }
        Self {
            rows: Arc::new(rows),
            cols: Arc::new(cols),
            offsets: Arc::new(offsets),
        }
    }
}

/// Per-graph constants shared by every forward pass.
pub struct GraphContext<T> {
    pub n: usize,
    pub m: usize,
    pub a_norm: Arc<Csr<T>>,
    pub adjacency: Arc<Csr<T>>,
    pub mean: Arc<Csr<T>>,
    pub attention: AttentionEdges,
    /// Degrees as an `n×1` column.
    pub degree: Tensor<T>,
}

impl<T: Scalar> GraphContext<T> {
    pub fn new(g: &Graph, self_loops: bool) -> Result<Self, ModelError> {
        Ok(Self {
            n: g.n(),
            m: g.m(),
            a_norm: Arc::new(normalize_adjacency(g, self_loops)?),
            adjacency: Arc::new(g.adjacency()),
            mean: Arc::new(mean_aggregator(g)),
            attention: AttentionEdges::new(g),
            degree: Tensor::column((0..g.n()).map(|u| T::of_usize(g.degree(u))).collect()),
        })
    }
}

/// Training-mode dropout, identity at evaluation.
pub(crate) fn maybe_dropout<T: Scalar, R: Rng + ?Sized>(
    t: &mut Tape<T>,
    x: Var,
    p: f64,
    train: bool,
    rng: &mut R,
) -> Result<Var, TensorError> {
    if train && p > 0.0 {
        t.dropout(x, p, rng)
    } else {
        Ok(x)
    }
}

/// One graph convolution `A_norm · H · W`.
pub fn gcn_layer<T: Scalar>(t: &mut Tape<T>, a_norm: &Arc<Csr<T>>, h: Var, w: Var) -> Result<Var, TensorError> {
    let hw = t.matmul(h, w)?;
    t.spmm(a_norm, hw)
}

/// Stacked convolutions with ReLU between layers and a linear last layer.
pub fn gcn_forward<T: Scalar, R: Rng + ?Sized>(
    t: &mut Tape<T>,
    a_norm: &Arc<Csr<T>>,
    x: Var,
    weights: &[Var],
    dropout: f64,
    train: bool,
    rng: &mut R,
) -> Result<Var, TensorError> {
    let mut h = x;
    for (l, &w) in weights.iter().enumerate() {
        h = maybe_dropout(t, h, dropout, train, rng)?;
        h = gcn_layer(t, a_norm, h, w)?;
        if l + 1 < weights.len() {
            h = t.relu(h)?;
        }
    }
    Ok(h)
}

/// Parameters of one attention head.
#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub w: Var,
    /// Source half of `a`, as a column.
    pub a_src: Var,
    /// Neighbor half of `a`, as a column.
    pub a_dst: Var,
}

/// Attention coefficients `α_ij = softmax_j LeakyReLU(aᵀ[Wh_i ‖ Wh_j])`
/// and the aggregated messages `Σ_j α_ij W h_j`.
pub fn gat_head<T: Scalar>(
    t: &mut Tape<T>,
    edges: &AttentionEdges,
    n: usize,
    h: Var,
    head: HeadVars,
    slope: T,
) -> Result<(Var, Var), TensorError> {
    let z = t.matmul(h, head.w)?;
    let s_src = t.matmul(z, head.a_src)?;
    let s_dst = t.matmul(z, head.a_dst)?;
    let e_src = t.gather_rows(s_src, &edges.rows)?;
    let e_dst = t.gather_rows(s_dst, &edges.cols)?;
    let e = t.add(e_src, e_dst)?;
    let e = t.leaky_relu(e, slope)?;
    let alpha = t.segment_softmax(e, &edges.offsets)?;
    let out = t.weighted_spmm(n, &edges.rows, &edges.cols, alpha, z)?;
    Ok((out, alpha))
}

/// Two-layer GAT: concatenated ReLU heads, then one linear head plus bias.
#[allow(clippy::too_many_arguments)]
pub fn gat_forward<T: Scalar, R: Rng + ?Sized>(
    t: &mut Tape<T>,
    edges: &AttentionEdges,
    n: usize,
    x: Var,
    first: &[HeadVars],
    last: HeadVars,
    bias: Var,
    slope: T,
    dropout: f64,
    train: bool,
    rng: &mut R,
) -> Result<Var, TensorError> {
    let x = maybe_dropout(t, x, dropout, train, rng)?;
    let mut h: Option<Var> = None;
    for &head in first {
        let (out, _) = gat_head(t, edges, n, x, head, slope)?;
        let out = t.relu(out)?;
        h = Some(match h {
            None => out,
            Some(prev) => t.concat_cols(prev, out)?,
        });
    }
    let h = h.ok_or_else(|| TensorError::Invalid("gat needs at least one head".into()))?;
    let h = maybe_dropout(t, h, dropout, train, rng)?;
    let (out, _) = gat_head(t, edges, n, h, last, slope)?;
    t.add(out, bias)
}

/// GraphSAGE layer `concat(h_i, mean_{j∈N(i)} h_j) · W`.
pub fn sage_layer<T: Scalar>(t: &mut Tape<T>, mean: &Arc<Csr<T>>, h: Var, w: Var) -> Result<Var, TensorError> {
    let agg = t.spmm(mean, h)?;
    let cat = t.concat_cols(h, agg)?;
    t.matmul(cat, w)
}

/// Two or more SAGE layers, ReLU between, bias on the final map.
#[allow(clippy::too_many_arguments)]
pub fn sage_forward<T: Scalar, R: Rng + ?Sized>(
    t: &mut Tape<T>,
    mean: &Arc<Csr<T>>,
    x: Var,
    weights: &[Var],
    bias: Var,
    dropout: f64,
    train: bool,
    rng: &mut R,
) -> Result<Var, TensorError> {
    let mut h = x;
    for (l, &w) in weights.iter().enumerate() {
        h = maybe_dropout(t, h, dropout, train, rng)?;
        h = sage_layer(t, mean, h, w)?;
        if l + 1 < weights.len() {
            h = t.relu(h)?;
        }
    }
    t.add(h, bias)
}
