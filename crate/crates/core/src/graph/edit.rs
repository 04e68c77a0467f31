use std::collections::{BTreeSet, VecDeque};

use super::{components, is_connected, Graph, GraphError};

/// What to do when removing edges would disconnect the graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeletionPolicy {
    /// Fail if the fully edited graph is disconnected.
    Reject,
    /// Delete in order, keeping any single edge whose removal would disconnect.
    Skip,
}

fn reachable(adj: &[BTreeSet<usize>], from: usize, to: usize) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(u) = queue.pop_front() {
        if u == to {
            return true;
        }
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    false
}

/// Removes `victims` from `g` under a connectivity guard.
///
/// Under [`DeletionPolicy::Reject`] a disconnected result is reported as
/// [`GraphError::Disconnected`], which callers treat as "regenerate".
pub fn delete_edges_guarded(
    g: &Graph,
    victims: &[(usize, usize)],
    policy: DeletionPolicy,
) -> Result<Graph, GraphError> {
    for &(u, v) in victims {
        if !g.has_edge(u, v) {
            return Err(GraphError::MissingEdge(u, v));
        }
    }
    let mut adj: Vec<BTreeSet<usize>> = (0..g.n())
        .map(|u| g.neighbors(u).iter().copied().collect())
        .collect();
    match policy {
        DeletionPolicy::Reject => {
            for &(u, v) in victims {
                adj[u].remove(&v);
                adj[v].remove(&u);
            }
        }
        DeletionPolicy::Skip => {
            for &(u, v) in victims {
                if !adj[u].remove(&v) {
                    continue;
                }
                adj[v].remove(&u);
                if !reachable(&adj, u, v) {
                    adj[u].insert(v);
                    adj[v].insert(u);
                }
            }
        }
    }
    let edges: Vec<(usize, usize)> = adj
        .iter()
        .enumerate()
        .flat_map(|(u, s)| s.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
        .collect();
    let out = g.with_edges(&edges)?;
    if policy == DeletionPolicy::Reject && !is_connected(&out) {
        return Err(GraphError::Disconnected);
    }
    Ok(out)
}

/// Largest connected component (ties: the one containing the smallest node).
/// Returns the induced subgraph and, for each new node, its original id.
pub fn largest_component(g: &Graph) -> (Graph, Vec<usize>) {
    let comp = components(g);
    let count = comp.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; count];
    for &c in &comp {
        sizes[c] += 1;
    }
    let best = (0..count)
        .max_by_key(|&c| (sizes[c], std::cmp::Reverse(c)))
        .unwrap_or(0);
    let keep: Vec<usize> = (0..g.n()).filter(|&u| comp[u] == best).collect();
    if keep.len() == g.n() {
        return (g.clone(), keep);
    }
    let mut new_id = vec![usize::MAX; g.n()];
    for (i, &u) in keep.iter().enumerate() {
        new_id[u] = i;
    }
    let edges: Vec<_> = g
        .edges()
        .into_iter()
        .filter(|&(u, _)| comp[u] == best)
        .map(|(u, v)| (new_id[u], new_id[v]))
        .collect();
    let mut sub = Graph::from_edges(keep.len(), &edges).expect("induced subgraph is simple");
    if let Some(x) = g.attrs() {
        let d = x.cols();
        let mut data = Vec::with_capacity(keep.len() * d);
        for &u in &keep {
            data.extend_from_slice(x.row(u));
        }
        sub = sub
            .with_attrs(crate::tensor::Tensor::from_vec(keep.len(), d, data).expect("sized"))
            .expect("rows match");
    }
    if let Some(p) = g.labels() {
        sub = sub.with_labels(p.restrict(&keep)).expect("sized");
    }
    (sub, keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Partition;

    fn triangle() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn deleting_nothing_is_identity() {
        let g = triangle();
        for policy in [DeletionPolicy::Reject, DeletionPolicy::Skip] {
            assert_eq!(delete_edges_guarded(&g, &[], policy).unwrap(), g);
        }
    }

    #[test]
    fn bridge_is_retained_under_skip() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (0, 2), (2, 3)]).unwrap();
        let out = delete_edges_guarded(&g, &[(2, 3)], DeletionPolicy::Skip).unwrap();
        assert!(out.has_edge(2, 3));
        assert_eq!(
            delete_edges_guarded(&g, &[(2, 3)], DeletionPolicy::Reject),
            Err(GraphError::Disconnected)
        );
    }

    #[test]
    fn one_triangle_edge_under_reject() {
        let out = delete_edges_guarded(&triangle(), &[(0, 1)], DeletionPolicy::Reject).unwrap();
        assert_eq!(out.m(), 2);
        assert!(is_connected(&out));
    }

    #[test]
    fn skip_keeps_last_edge_of_each_node() {
        let g = triangle();
        let out = delete_edges_guarded(&g, &g.edges(), DeletionPolicy::Skip).unwrap();
        assert_eq!(out.m(), 2);
        assert!(is_connected(&out));
    }

    #[test]
    fn missing_victim_is_an_error() {
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        assert_eq!(
            delete_edges_guarded(&g, &[(1, 2)], DeletionPolicy::Skip),
            Err(GraphError::MissingEdge(1, 2))
        );
    }

    #[test]
    fn largest_component_carries_attributes_and_labels() {
        let g = Graph::from_edges(5, &[(0, 1), (2, 3), (3, 4)])
            .unwrap()
            .with_attrs(crate::tensor::Tensor::from_vec(5, 1, vec![0., 1., 2., 3., 4.]).unwrap())
            .unwrap()
            .with_labels(Partition::new(vec![0, 0, 1, 1, 2], 3).unwrap())
            .unwrap();
        let (sub, keep) = largest_component(&g);
        assert_eq!(keep, vec![2, 3, 4]);
        assert_eq!(sub.edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(sub.attrs().unwrap().data(), &[2., 3., 4.]);
        assert_eq!(sub.labels().unwrap().labels(), &[1, 1, 2]);
    }
}
