//! Undirected simple graphs, planted partitions, and the structural kernels
//! the rest of the crate builds on.

mod betweenness;
mod edit;
mod modularity;

use std::collections::VecDeque;

use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::{Csr, Tensor};

pub use betweenness::betweenness;
pub use edit::{delete_edges_guarded, largest_component, DeletionPolicy};
pub use modularity::{cut_count, modularity, modularity_matrix, modularity_trace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({0}, {1}) is not in the graph")]
    MissingEdge(usize, usize),
    #[error("attribute matrix has {rows} rows, graph has {n} nodes")]
    AttributeRows { rows: usize, n: usize },
    #[error("partition covers {len} nodes, graph has {n}")]
    PartitionSize { len: usize, n: usize },
    #[error("label {label} is not below declared community count {k}")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("graph has no edges")]
    NoEdges,
    #[error("graph is disconnected")]
    Disconnected,
}

/// Hard node → community assignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self, GraphError> {
        if let Some(&label) = labels.iter().find(|&&l| l >= k) {
            return Err(GraphError::LabelOutOfRange { label, k });
        }
        Ok(Self { labels, k })
    }

    /// Uses `max label + 1` as the declared count.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self { labels, k }
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            labels: (0..n).collect(),
            k: n,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, node: usize) -> usize {
        self.labels[node]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Number of labels with at least one member.
    pub fn effective_k(&self) -> usize {
        self.sizes().iter().filter(|&&s| s > 0).count()
    }

    /// Relabels communities to `0..effective_k` in order of first appearance,
    /// dropping empty ones.
    pub fn compacted(&self) -> Self {
        let mut map = vec![usize::MAX; self.k];
        let mut next = 0;
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect();
        Self { labels, k: next }
    }

    /// Members of each community, in node order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Restricts to the listed nodes (new node `i` is old node `keep[i]`).
    pub fn restrict(&self, keep: &[usize]) -> Self {
        Self {
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
            k: self.k,
        }
    }

    /// One-hot `n×k` assignment matrix.
    pub fn one_hot<T: Scalar>(&self) -> Tensor<T> {
        let mut c = Tensor::zeros(self.labels.len(), self.k);
        for (i, &l) in self.labels.iter().enumerate() {
            c.set(i, l, T::one());
        }
        c
    }
}

/// Undirected, unweighted simple graph with optional attributes and labels.
///
/// Adjacency is stored once as sorted CSR neighbor lists; the same arrays
/// serve traversals and the sparse matrix view.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    attrs: Option<Tensor<f64>>,
    labels: Option<Partition>,
}

impl Graph {
    /// Builds from unordered pairs. Rejects self-loops, duplicates and
    /// out-of-range endpoints.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut lists = vec![Vec::new(); n];
        for &(u, v) in edges {
            for x in [u, v] {
                if x >= n {
                    return Err(GraphError::NodeOutOfRange { node: x, n });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            lists[u].push(v);
            lists[v].push(u);
        }
        for (u, list) in lists.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(GraphError::DuplicateEdge(u.min(w[0]), u.max(w[0])));
            }
        }
        Ok(Self::from_sorted_lists(lists))
    }

    /// Like [`Graph::from_edges`] but drops self-loops and duplicates.
    pub fn from_edges_lossy(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut canon: Vec<(usize, usize)> = edges
            .iter()
            .filter(|(u, v)| u != v)
            .map(|&(u, v)| (u.min(v), u.max(v)))
            .collect();
        canon.sort_unstable();
        canon.dedup();
        Self::from_edges(n, &canon)
    }

    fn from_sorted_lists(lists: Vec<Vec<usize>>) -> Self {
        let n = lists.len();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut neighbors = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        for list in lists {
            neighbors.extend(list);
            offsets.push(neighbors.len());
        }
        Self {
            n,
            offsets,
            neighbors,
            attrs: None,
            labels: None,
        }
    }

    pub fn with_attrs(mut self, attrs: Tensor<f64>) -> Result<Self, GraphError> {
        if attrs.rows() != self.n {
            return Err(GraphError::AttributeRows {
                rows: attrs.rows(),
                n: self.n,
            });
        }
        self.attrs = Some(attrs);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Partition) -> Result<Self, GraphError> {
        if labels.len() != self.n {
            return Err(GraphError::PartitionSize {
                len: labels.len(),
                n: self.n,
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn set_attrs(&mut self, attrs: Option<Tensor<f64>>) -> Result<(), GraphError> {
        if let Some(a) = &attrs {
            if a.rows() != self.n {
                return Err(GraphError::AttributeRows {
                    rows: a.rows(),
                    n: self.n,
                });
            }
        }
        self.attrs = attrs;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of undirected edges.
    pub fn m(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn attrs(&self) -> Option<&Tensor<f64>> {
        self.attrs.as_ref()
    }

    pub fn labels(&self) -> Option<&Partition> {
        self.labels.as_ref()
    }

    #[inline]
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[self.offsets[u]..self.offsets[u + 1]]
    }

    #[inline]
    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && v < self.n && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.m());
        for u in 0..self.n {
            for &v in self.neighbors(u) {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Same node set, attributes and labels, different edges.
    pub fn with_edges(&self, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut g = Self::from_edges(self.n, edges)?;
        g.attrs = self.attrs.clone();
        g.labels = self.labels.clone();
        Ok(g)
    }

    /// Symmetric 0/1 adjacency as a sparse matrix.
    pub fn adjacency<T: Scalar>(&self) -> Csr<T> {
        let triplets = (0..self.n)
            .flat_map(|u| self.neighbors(u).iter().map(move |&v| (u, v, T::one())))
            .collect();
        Csr::from_triplets(self.n, self.n, triplets)
    }

    pub fn dense_adjacency<T: Scalar>(&self) -> Tensor<T> {
        let mut a = Tensor::zeros(self.n, self.n);
        for u in 0..self.n {
            for &v in self.neighbors(u) {
                a.set(u, v, T::one());
            }
        }
        a
    }
}

/// Entry `i` is the number of edges incident to node `i`.
pub fn degrees(g: &Graph) -> Vec<usize> {
    (0..g.n()).map(|u| g.degree(u)).collect()
}

/// BFS distances from `source`; unreachable nodes are `usize::MAX`.
pub fn bfs_distances(g: &Graph, source: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; g.n()];
    let mut queue = VecDeque::new();
    dist[source] = 0;
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        for &v in g.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

pub fn is_connected(g: &Graph) -> bool {
    if g.n() == 0 {
        return true;
    }
    bfs_distances(g, 0).iter().all(|&d| d != usize::MAX)
}

/// Connected component id per node, numbered in order of smallest member.
pub fn components(g: &Graph) -> Vec<usize> {
    let mut comp = vec![usize::MAX; g.n()];
    let mut next = 0;
    let mut stack = Vec::new();
    for s in 0..g.n() {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next;
        stack.push(s);
        while let Some(u) = stack.pop() {
            for &v in g.neighbors(u) {
                if comp[v] == usize::MAX {
                    comp[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    comp
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn degrees_of_small_graphs() {
        assert_eq!(degrees(&path(3)), vec![1, 2, 1]);
        let empty = Graph::from_edges(3, &[]).unwrap();
        assert_eq!(degrees(&empty), vec![0, 0, 0]);
        let g = path(5);
        assert_eq!(degrees(&g).iter().sum::<usize>(), 2 * g.m());
    }

    #[test]
    fn connectivity() {
        assert!(is_connected(&Graph::from_edges(2, &[(0, 1)]).unwrap()));
        assert!(!is_connected(
            &Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap()
        ));
        assert_eq!(
            components(&Graph::from_edges(5, &[(0, 1), (3, 4)]).unwrap()),
            vec![0, 0, 1, 2, 2]
        );
    }

    #[test]
    fn construction_rejects_bad_edges() {
        assert_eq!(
            Graph::from_edges(3, &[(1, 1)]).unwrap_err(),
            GraphError::SelfLoop(1)
        );
        assert_eq!(
            Graph::from_edges(3, &[(0, 1), (1, 0)]).unwrap_err(),
            GraphError::DuplicateEdge(0, 1)
        );
        assert!(matches!(
            Graph::from_edges(3, &[(0, 3)]),
            Err(GraphError::NodeOutOfRange { node: 3, .. })
        ));
        let g = Graph::from_edges_lossy(3, &[(0, 1), (1, 0), (2, 2), (1, 2)]).unwrap();
        assert_eq!(g.edges(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn adjacency_views_agree() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let sparse = g.adjacency::<f64>();
        assert_eq!(sparse.to_dense(), g.dense_adjacency::<f64>());
        assert!(sparse.is_symmetric(0.0));
        assert!(g.has_edge(3, 0) && !g.has_edge(0, 2));
    }

    #[test]
    fn partition_helpers() {
        assert!(Partition::new(vec![0, 3], 3).is_err());
        let p = Partition::new(vec![2, 2, 0, 2], 4).unwrap();
        assert_eq!(p.sizes(), vec![1, 0, 3, 0]);
        assert_eq!(p.effective_k(), 2);
        assert_eq!(p.compacted().labels(), &[0, 0, 1, 0]);
        assert_eq!(p.members()[2], vec![0, 1, 3]);
    }
}
