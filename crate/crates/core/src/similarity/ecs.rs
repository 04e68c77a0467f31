use std::collections::HashMap;

use crate::graph::Partition;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{EcsParams, SimilarityError};

/// Clusters of a (possibly overlapping, possibly hierarchical) clustering.
/// `levels[γ]` is the hierarchy level of cluster γ, weighted by `e^{r·l}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cover {
    pub n: usize,
    pub clusters: Vec<Vec<usize>>,
    pub levels: Vec<f64>,
}

impl Cover {
    /// Flat cover from a partition; empty labels are dropped.
    pub fn from_partition(p: &Partition) -> Self {
        let clusters: Vec<Vec<usize>> = p.members().into_iter().filter(|c| !c.is_empty()).collect();
        let levels = vec![0.0; clusters.len()];
        Self {
            n: p.len(),
            clusters,
            levels,
        }
    }
}

/// Row-stochastic projection of the node–cluster affiliation graph:
/// `w_ij = Σ_γ a_iγ a_jγ / Σ_γ Σ_m a_iγ a_mγ`.
pub fn element_graph<T: Scalar>(cover: &Cover, params: &EcsParams) -> Result<Tensor<T>, SimilarityError> {
    let n = cover.n;
    let weight: Vec<T> = cover
        .clusters
        .iter()
        .enumerate()
        .map(|(g, _)| T::of((params.r * cover.levels.get(g).copied().unwrap_or(0.0)).exp()))
        .collect();
    let mut w = Tensor::zeros(n, n);
    let mut row_mass = vec![T::zero(); n];
    for (g, members) in cover.clusters.iter().enumerate() {
        let a = weight[g];
        let block = a * a;
        for &i in members {
            if i >= n {
                return Err(SimilarityError::NodeOutOfRange { node: i, n });
            }
            row_mass[i] += block * T::of_usize(members.len());
            for &j in members {
                let v = w.get(i, j) + block;
                w.set(i, j, v);
            }
        }
    }
    for (i, &mass) in row_mass.iter().enumerate() {
        if mass == T::zero() {
            return Err(SimilarityError::Unassigned(i));
        }
        w.row_mut(i).iter_mut().for_each(|x| *x /= mass);
    }
    Ok(w)
}

fn check_stochastic<T: Scalar>(w: &Tensor<T>) -> Result<(), SimilarityError> {
    if w.rows() != w.cols() {
        return Err(SimilarityError::NotStochastic(format!("shape {:?}", w.shape())));
    }
    for i in 0..w.rows() {
        let s: T = w.row(i).iter().copied().sum();
        if w.row(i).iter().any(|&x| x < T::zero()) || (s - T::one()).abs() > T::of(1e-9) {
            return Err(SimilarityError::NotStochastic(format!("row {i} sums to {s}")));
        }
    }
    Ok(())
}

/// Personalized PageRank affinities by direct solve:
/// `P = (1 − α)(I − αW)⁻¹`, row `i` being node `i`'s stationary distribution.
pub fn ppr_affinity<T: Scalar>(w: &Tensor<T>, alpha: T) -> Result<Tensor<T>, SimilarityError> {
    check_stochastic(w)?;
    let n = w.rows();
    // Gauss–Jordan on [I − αW | I]
    let mut a: Vec<Vec<T>> = (0..n)
        .map(|i| {
            let mut row: Vec<T> = w.row(i).iter().map(|&x| -alpha * x).collect();
            row[i] += T::one();
            row.extend((0..n).map(|j| if i == j { T::one() } else { T::zero() }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).expect("finite"))
            .expect("non-empty range");
        a.swap(col, piv);
        let p = a[col][col];
        a[col].iter_mut().for_each(|x| *x /= p);
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col {
                let f = row[col];
                if f != T::zero() {
                    row.iter_mut().zip(&pivot_row).for_each(|(x, &y)| *x -= f * y);
                }
            }
        }
    }
    let one_minus = T::one() - alpha;
    let data = a
        .into_iter()
        .flat_map(|row| row.into_iter().skip(n).map(move |x| x * one_minus))
        .collect();
    Ok(Tensor::from_vec(n, n, data).expect("n×n"))
}

/// Fixed-point iteration `P ← (1 − α)I + α P W` until the update falls
/// below `tol` in max norm.
pub fn ppr_affinity_iterative<T: Scalar>(
    w: &Tensor<T>,
    alpha: T,
    tol: T,
    max_iter: usize,
) -> Result<Tensor<T>, SimilarityError> {
    check_stochastic(w)?;
    let n = w.rows();
    let mut p = Tensor::identity(n);
    let one_minus = T::one() - alpha;
    for _ in 0..max_iter {
        let mut next = p.matmul(w).expect("square");
        for (i, x) in next.data_mut().iter_mut().enumerate() {
            *x *= alpha;
            if i / n == i % n {
                *x += one_minus;
            }
        }
        let delta = next.max_abs_diff(&p);
        p = next;
        if delta < tol {
            return Ok(p);
        }
    }
    Err(SimilarityError::NoConvergence(max_iter))
}

/// Closed form for disjoint partitions:
/// `p_ij = (1 − α)[i = j] + α/|c(i)|·[c(i) = c(j)]`.
pub fn disjoint_affinity<T: Scalar>(p: &Partition, alpha: T) -> Tensor<T> {
    let n = p.len();
    let sizes = p.sizes();
    let mut out = Tensor::zeros(n, n);
    for i in 0..n {
        let share = alpha / T::of_usize(sizes[p.label(i)]);
        for j in 0..n {
            let mut v = if p.label(i) == p.label(j) { share } else { T::zero() };
            if i == j {
                v += T::one() - alpha;
            }
            out.set(i, j, v);
        }
    }
    out
}

fn score_from_affinities<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, alpha: T) -> T {
    let n = T::of_usize(a.rows());
    let l1: T = a.data().iter().zip(b.data()).map(|(&x, &y)| (x - y).abs()).sum();
    T::one() - l1 / (T::of(2.0) * alpha * n)
}

/// Element-centric similarity through the general affiliation-graph and
/// linear-solve route. `O(n³)`; intended for small inputs and as an oracle.
pub fn ecs_cover<T: Scalar>(c1: &Cover, c2: &Cover, params: &EcsParams) -> Result<T, SimilarityError> {
    if c1.n != c2.n {
        return Err(SimilarityError::NodeCountMismatch(c1.n, c2.n));
    }
    params.validate()?;
    let alpha = T::of(params.alpha);
    let p1 = ppr_affinity(&element_graph::<T>(c1, params)?, alpha)?;
    let p2 = ppr_affinity(&element_graph::<T>(c2, params)?, alpha)?;
    Ok(score_from_affinities(&p1, &p2, alpha))
}

pub fn ecs_general<T: Scalar>(p1: &Partition, p2: &Partition, params: &EcsParams) -> Result<T, SimilarityError> {
    ecs_cover(&Cover::from_partition(p1), &Cover::from_partition(p2), params)
}

/// Element-centric similarity of two flat partitions in `O(n)`.
///
/// For node `i` with cluster sizes `a`, `b` and overlap `o`, the affinity
/// rows differ by `α(o|1/a − 1/b| + (a − o)/a + (b − o)/b)` in L1.
pub fn ecs<T: Scalar>(p1: &Partition, p2: &Partition, params: &EcsParams) -> Result<T, SimilarityError> {
    if p1.len() != p2.len() {
        return Err(SimilarityError::NodeCountMismatch(p1.len(), p2.len()));
    }
    params.validate()?;
    let n = p1.len();
    if n == 0 {
        return Ok(T::one());
    }
    let (s1, s2) = (p1.sizes(), p2.sizes());
    let mut overlap: HashMap<(usize, usize), usize> = HashMap::new();
    for i in 0..n {
        *overlap.entry((p1.label(i), p2.label(i))).or_default() += 1;
    }
    let mut total = T::zero();
    for i in 0..n {
        let (l1, l2) = (p1.label(i), p2.label(i));
        let a = T::of_usize(s1[l1]);
        let b = T::of_usize(s2[l2]);
        let o = T::of_usize(overlap[&(l1, l2)]);
        total += o * (T::one() / a - T::one() / b).abs() + (a - o) / a + (b - o) / b;
    }
    Ok(T::one() - total / (T::of(2.0) * T::of_usize(n)))
}
