use std::sync::Arc;

use crate::graph::Graph;
use crate::scalar::Scalar;
use crate::tensor::{Csr, Tape, Tensor, TensorError, Var};

use super::ModelError;

/// Normalized-cut relaxation terms on the tape.
/// `cut = −Tr(SᵀAS)/Tr(SᵀDS)`, `ortho = ‖SᵀS/‖SᵀS‖_F − I/√k‖_F`.
pub fn mincut_terms<T: Scalar>(
    t: &mut Tape<T>,
    adjacency: &Arc<Csr<T>>,
    degree: &Tensor<T>,
    s: Var,
) -> Result<(Var, Var), ModelError> {
    let k = t.value(s).cols();
    let as_ = t.spmm(adjacency, s)?;
    let prod = t.mul(s, as_)?;
    let num = t.sum(prod)?;
    let d = t.constant(degree.clone());
    let sq = t.mul(s, s)?;
    let dsq = t.mul(sq, d)?;
    let den = t.sum(dsq)?;
    if t.value(den).item() == T::zero() {
        return Err(ModelError::Degenerate("Tr(SᵀDS) is zero".into()));
    }
    let ratio = t.div(num, den)?;
    let cut = t.scale(ratio, -T::one())?;

    let st = t.transpose(s)?;
    let sts = t.matmul(st, s)?;
    let norm = t.frobenius_norm(sts)?;
    let unit = t.div(sts, norm)?;
    let target = t.constant(Tensor::identity(k).map(|x| x / T::of_usize(k).sqrt()));
    let diff = t.sub(unit, target)?;
    let ortho = t.frobenius_norm(diff)?;
    Ok((cut, ortho))
}

/// Value-level `(cut_loss, ortho_loss)` for an assignment `S`.
pub fn mincut_losses<T: Scalar>(g: &Graph, s: &Tensor<T>) -> Result<(T, T), ModelError> {
    let mut t = Tape::new();
    let sv = t.constant(s.clone());
    let a = Arc::new(g.adjacency());
    let d = Tensor::column((0..g.n()).map(|u| T::of_usize(g.degree(u))).collect());
    let (cut, ortho) = mincut_terms(&mut t, &a, &d, sv)?;
    Ok((t.value(cut).item(), t.value(ortho).item()))
}

/// DiffPool link-prediction and entropy terms on the tape.
///
/// `L_LP = ‖A − SSᵀ‖_F` through `‖A‖² − 2Tr(SᵀAS) + ‖SᵀS‖²`, so the `n×n`
/// reconstruction is never formed. `L_E` is the mean row entropy of `S`.
pub fn diffpool_terms<T: Scalar>(
    t: &mut Tape<T>,
    adjacency: &Arc<Csr<T>>,
    m: usize,
    s: Var,
) -> Result<(Var, Var), ModelError> {
    let n = t.value(s).rows();
    let as_ = t.spmm(adjacency, s)?;
    let prod = t.mul(s, as_)?;
    let tr = t.sum(prod)?;
    let st = t.transpose(s)?;
    let sts = t.matmul(st, s)?;
    let sq = t.mul(sts, sts)?;
    let gram = t.sum(sq)?;
    let twice = t.scale(tr, -T::of(2.0))?;
    let total = t.add(gram, twice)?;
    let total = t.add_scalar(total, T::of_usize(2 * m))?;
    // guard against tiny negative rounding before the square root
    let floor = T::of(1e-12);
    if t.value(total).item() < floor {
        return Err(ModelError::Degenerate("‖A − SSᵀ‖ vanished".into()));
    }
    let link = t.powf(total, T::of(0.5))?;
    let logs = t.log(s)?;
    let plogp = t.mul(s, logs)?;
    let h = t.sum(plogp)?;
    let entropy = t.scale(h, -T::one() / T::of_usize(n))?;
    Ok((link, entropy))
}

/// One pooling step: coarsened `A' = SᵀAS`, `X' = SᵀZ`, and the two
/// auxiliary losses.
pub struct DiffPoolStep<T> {
    pub a_coarse: Tensor<T>,
    pub x_coarse: Tensor<T>,
    pub link_loss: T,
    pub entropy_loss: T,
}

pub fn diffpool_step<T: Scalar>(g: &Graph, z: &Tensor<T>, s: &Tensor<T>) -> Result<DiffPoolStep<T>, ModelError> {
    let a = Arc::new(g.adjacency());
    let mut t = Tape::new();
    let sv = t.constant(s.clone());
    let zv = t.constant(z.clone());
    let st = t.transpose(sv)?;
    let x_coarse = t.matmul(st, zv)?;
    let as_ = t.spmm(&a, sv)?;
    let a_coarse = t.matmul(st, as_)?;
    let (link, entropy) = diffpool_terms(&mut t, &a, g.m(), sv)?;
    Ok(DiffPoolStep {
        a_coarse: t.value(a_coarse).clone(),
        x_coarse: t.value(x_coarse).clone(),
        link_loss: t.value(link).item(),
        entropy_loss: t.value(entropy).item(),
    })
}

/// DMoN objective `−Tr(CᵀBC)/2m + w·(√k/N)‖Σ_i C_iᵀ‖_F − w` on the tape,
/// using `Tr(CᵀBC) = Tr(CᵀAC) − ‖dᵀC‖²/2m`.
pub fn dmon_terms<T: Scalar>(
    t: &mut Tape<T>,
    adjacency: &Arc<Csr<T>>,
    degree: &Tensor<T>,
    m: usize,
    c: Var,
    collapse_weight: T,
) -> Result<Var, ModelError> {
    if m == 0 {
        return Err(ModelError::Degenerate("graph has no edges".into()));
    }
    let [n, k] = t.value(c).shape();
    let two_m = T::of_usize(2 * m);
    let ac = t.spmm(adjacency, c)?;
    let prod = t.mul(c, ac)?;
    let tr_a = t.sum(prod)?;
    let dt = t.constant(degree.transpose());
    let dc = t.matmul(dt, c)?;
    let dc2 = t.mul(dc, dc)?;
    let null = t.sum(dc2)?;
    let null = t.scale(null, T::one() / two_m)?;
    let tr_b = t.sub(tr_a, null)?;
    let modularity = t.scale(tr_b, -T::one() / two_m)?;
    let sizes = t.col_sum(c)?;
    let norm = t.frobenius_norm(sizes)?;
    let collapse = t.scale(norm, collapse_weight * T::of_usize(k).sqrt() / T::of_usize(n))?;
    let collapse = t.add_scalar(collapse, -collapse_weight)?;
    Ok(t.add(modularity, collapse)?)
}

pub fn dmon_loss<T: Scalar>(g: &Graph, c: &Tensor<T>, collapse_weight: T) -> Result<T, ModelError> {
    if c.rows() != g.n() {
        return Err(TensorError::shape("dmon loss", c.shape(), [g.n(), c.cols()]).into());
    }
    let mut t = Tape::new();
    let cv = t.constant(c.clone());
    let a = Arc::new(g.adjacency());
    let d = Tensor::column((0..g.n()).map(|u| T::of_usize(g.degree(u))).collect());
    let loss = dmon_terms(&mut t, &a, &d, g.m(), cv, collapse_weight)?;
    Ok(t.value(loss).item())
}
