use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{Graph, GraphError, Partition};

fn check_cover(g: &Graph, p: &Partition) -> Result<(), GraphError> {
    if p.len() != g.n() {
        return Err(GraphError::PartitionSize {
            len: p.len(),
            n: g.n(),
        });
    }
    Ok(())
}

/// Newman modularity by direct summation over node pairs.
pub fn modularity<T: Scalar>(g: &Graph, p: &Partition) -> Result<T, GraphError> {
    check_cover(g, p)?;
    if g.m() == 0 {
        return Err(GraphError::NoEdges);
    }
    let two_m = T::of_usize(2 * g.m());
    let deg: Vec<T> = (0..g.n()).map(|u| T::of_usize(g.degree(u))).collect();
    // Σ_ij A_ij δ = 2·(intra edges); Σ_ij d_i d_j δ = Σ_c vol(c)²
    let mut intra = T::zero();
    for u in 0..g.n() {
        for &v in g.neighbors(u) {
            if p.label(u) == p.label(v) {
                intra += T::one();
            }
        }
    }
    let mut vol = vec![T::zero(); p.k()];
    for u in 0..g.n() {
        vol[p.label(u)] += deg[u];
    }
    let expected: T = vol.iter().map(|&v| v * v).sum::<T>() / two_m;
    Ok((intra - expected) / two_m)
}

/// `B = A − d dᵀ / 2m`.
pub fn modularity_matrix<T: Scalar>(g: &Graph) -> Result<Tensor<T>, GraphError> {
    if g.m() == 0 {
        return Err(GraphError::NoEdges);
    }
    let n = g.n();
    let two_m = T::of_usize(2 * g.m());
    let mut b = g.dense_adjacency::<T>();
    for i in 0..n {
        let di = T::of_usize(g.degree(i));
        let row = b.row_mut(i);
        for (j, x) in row.iter_mut().enumerate() {
            *x -= di * T::of_usize(g.degree(j)) / two_m;
        }
    }
    Ok(b)
}

/// Modularity through the trace form `(1/2m) Tr(Cᵀ B C)` with a one-hot `C`.
pub fn modularity_trace<T: Scalar>(g: &Graph, p: &Partition) -> Result<T, GraphError> {
    check_cover(g, p)?;
    let b = modularity_matrix::<T>(g)?;
    let c = p.one_hot::<T>();
    let bc = b.matmul(&c).expect("shapes agree");
    let mut tr = T::zero();
    for i in 0..c.rows() {
        for j in 0..c.cols() {
            tr += c.get(i, j) * bc.get(i, j);
        }
    }
    Ok(tr / T::of_usize(2 * g.m()))
}

/// Number of edges whose endpoints carry different labels.
pub fn cut_count(g: &Graph, p: &Partition) -> Result<usize, GraphError> {
    check_cover(g, p)?;
    Ok(g
        .edges()
        .into_iter()
        .filter(|&(u, v)| p.label(u) != p.label(v))
        .count())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles(bridge: bool) -> Graph {
        let mut edges = vec![(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)];
        if bridge {
            edges.push((2, 3));
        }
        Graph::from_edges(6, &edges).unwrap()
    }

    /// Literal double sum over all ordered pairs.
    fn modularity_oracle(g: &Graph, p: &Partition) -> f64 {
        let two_m = 2.0 * g.m() as f64;
        let mut q = 0.0;
        for i in 0..g.n() {
            for j in 0..g.n() {
                if p.label(i) == p.label(j) {
                    let a = if g.has_edge(i, j) { 1.0 } else { 0.0 };
                    q += a - (g.degree(i) * g.degree(j)) as f64 / two_m;
                }
            }
        }
        q / two_m
    }

    #[test]
    fn one_community_has_zero_modularity() {
        let g = two_triangles(true);
        let p = Partition::new(vec![0; 6], 1).unwrap();
        assert!(modularity::<f64>(&g, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn disconnected_triangles_by_triangle() {
        let g = two_triangles(false);
        let p = Partition::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap();
        assert!((modularity::<f64>(&g, &p).unwrap() - 0.5).abs() < 1e-15);
        assert!((modularity_oracle(&g, &p) - 0.5).abs() < 1e-15);
        assert!((modularity_trace::<f64>(&g, &p).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn every_other_partition_scores_below_the_planted_one() {
        let g = two_triangles(false);
        // exhaustive over all labelings with at most 6 labels, via base-6 counting
        let mut best_other = f64::NEG_INFINITY;
        for code in 0..6usize.pow(6) {
            let labels: Vec<usize> = (0..6).map(|i| code / 6usize.pow(i) % 6).collect();
            let p = Partition::new(labels.clone(), 6).unwrap();
            let same_as_planted = labels[0] == labels[1]
                && labels[1] == labels[2]
                && labels[3] == labels[4]
                && labels[4] == labels[5]
                && labels[0] != labels[3];
            let q = modularity_oracle(&g, &p);
            assert!((q - modularity::<f64>(&g, &p).unwrap()).abs() < 1e-12);
            if !same_as_planted {
                best_other = best_other.max(q);
            }
        }
        assert!(best_other < 0.5);
    }

    #[test]
    fn modularity_matrix_single_edge() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let b = modularity_matrix::<f64>(&g).unwrap();
        assert_eq!(b.data(), &[-0.5, 0.5, 0.5, -0.5]);
    }

    #[test]
    fn modularity_matrix_rows_sum_to_zero_and_symmetric() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let b = modularity_matrix::<f64>(&g).unwrap();
        assert_eq!(b, b.transpose());
        let g = two_triangles(true);
        let b = modularity_matrix::<f64>(&g).unwrap();
        for i in 0..6 {
            assert!(b.row(i).iter().sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn empty_graph_errors() {
        let g = Graph::from_edges(3, &[]).unwrap();
        let p = Partition::new(vec![0, 0, 0], 1).unwrap();
        assert_eq!(modularity::<f64>(&g, &p), Err(GraphError::NoEdges));
        assert_eq!(modularity_matrix::<f64>(&g), Err(GraphError::NoEdges));
    }

    #[test]
    fn cut_counts() {
        let split = Partition::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap();
        assert_eq!(cut_count(&two_triangles(false), &split).unwrap(), 0);
        assert_eq!(cut_count(&two_triangles(true), &split).unwrap(), 1);
        let g = two_triangles(true);
        assert_eq!(cut_count(&g, &Partition::singletons(6)).unwrap(), g.m());
    }
}
