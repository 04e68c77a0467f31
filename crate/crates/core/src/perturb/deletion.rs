use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{betweenness, delete_edges_guarded, DeletionPolicy, Graph};

use super::PerturbError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeletionKind {
    Random,
    Targeted,
}

/// Which nodes lose their incident edges, and how connectivity is guarded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDeletionSpec {
    pub kind: DeletionKind,
    pub node_fraction: f64,
    #[serde(default = "default_policy")]
    pub policy: DeletionPolicy,
}

fn default_policy() -> DeletionPolicy {
    DeletionPolicy::Skip
}

impl EdgeDeletionSpec {
    pub fn new(kind: DeletionKind, node_fraction: f64) -> Self {
        Self { kind, node_fraction, policy: DeletionPolicy::Skip }
    }
}

/// `⌈fraction·n⌉`, tolerant of representation error in the product.
pub fn select_count(n: usize, fraction: f64) -> Result<usize, PerturbError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(PerturbError::Fraction(fraction));
    }
    Ok(((fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n))
}

/// Uniform sample of `⌈fraction·n⌉` distinct nodes, sorted.
pub fn select_nodes_random<R: Rng + ?Sized>(g: &Graph, fraction: f64, rng: &mut R) -> Result<Vec<usize>, PerturbError> {
    let count = select_count(g.n(), fraction)?;
    let mut nodes = index::sample(rng, g.n(), count).into_vec();
    nodes.sort_unstable();
    Ok(nodes)
}

/// Rank 1 for the lowest betweenness up to `n` for the highest; ties are
/// ranked by ascending node id.
pub fn betweenness_ranks(g: &Graph) -> Result<Vec<usize>, PerturbError> {
    let score = betweenness(g)?;
    let mut order: Vec<usize> = (0..g.n()).collect();
    order.sort_by(|&a, &b| score[a].total_cmp(&score[b]).then(a.cmp(&b)));
    let mut rank = vec![0; g.n()];
    for (r, &u) in order.iter().enumerate() {
        rank[u] = r + 1;
    }
    Ok(rank)
}

/// Sequential draws without replacement, each with probability proportional
/// to betweenness rank among the nodes still unselected. Returned in draw order.
pub fn select_nodes_targeted<R: Rng + ?Sized>(g: &Graph, fraction: f64, rng: &mut R) -> Result<Vec<usize>, PerturbError> {
    let count = select_count(g.n(), fraction)?;
    if count == 0 {
        return Ok(Vec::new());
    }
    let rank = betweenness_ranks(g)?;
    let mut pool: Vec<usize> = (0..g.n()).collect();
    let mut total: usize = rank.iter().sum();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut ticket = rng.random_range(0..total);
        let pos = pool
            .iter()
            .position(|&u| {
                if ticket < rank[u] {
                    true
                } else {
                    ticket -= rank[u];
                    false
                }
            })
            .expect("ticket below total weight");
        let u = pool.remove(pos);
        total -= rank[u];
        out.push(u);
    }
    Ok(out)
}

/// Union of edges touching `nodes`, each once, as `(min, max)` pairs in sorted order.
pub fn incident_edges(g: &Graph, nodes: &[usize]) -> Vec<(usize, usize)> {
    let mut set = BTreeSet::new();
    for &u in nodes {
        for &v in g.neighbors(u) {
            set.insert((u.min(v), u.max(v)));
        }
    }
    set.into_iter().collect()
}

/// Selects nodes per `spec` and deletes their incident edges in shuffled
/// order through the connectivity guard.
pub fn apply_edge_deletion<R: Rng + ?Sized>(g: &Graph, spec: &EdgeDeletionSpec, rng: &mut R) -> Result<Graph, PerturbError> {
    let nodes = match spec.kind {
        DeletionKind::Random => select_nodes_random(g, spec.node_fraction, rng)?,
        DeletionKind::Targeted => select_nodes_targeted(g, spec.node_fraction, rng)?,
    };
    let mut victims = incident_edges(g, &nodes);
    victims.shuffle(rng);
    Ok(delete_edges_guarded(g, &victims, spec.policy)?)
}
