use std::collections::VecDeque;

use super::{is_connected, Graph, GraphError};

/// Exact shortest-path betweenness over unordered source/target pairs,
/// endpoints excluded, unnormalized (Brandes accumulation).
pub fn betweenness(g: &Graph) -> Result<Vec<f64>, GraphError> {
    if !is_connected(g) {
        return Err(GraphError::Disconnected);
    }
    let n = g.n();
    let mut score = vec![0.0; n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0f64; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::with_capacity(n);

    for s in 0..n {
        sigma.iter_mut().for_each(|x| *x = 0.0);
        dist.iter_mut().for_each(|x| *x = usize::MAX);
        delta.iter_mut().for_each(|x| *x = 0.0);
        order.clear();

        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in g.neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                }
            }
        }
        // predecessors are exactly the neighbours one level closer to s
        for &w in order.iter().rev() {
            for &v in g.neighbors(w) {
                if dist[v] != usize::MAX && dist[v] + 1 == dist[w] {
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
                }
            }
            if w != s {
                score[w] += delta[w];
            }
        }
    }
    // each unordered pair was counted from both ends
    score.iter_mut().for_each(|x| *x /= 2.0);
    Ok(score)
}
