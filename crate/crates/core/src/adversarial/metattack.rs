use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, Partition};
use crate::models::{extract_partition, stratified_split};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};

use super::nettack::{adjacency_sets, graph_from_sets, structure_flip_allowed, toggle};
use super::surrogate::{train_surrogate, SurrogateConfig};
use super::{AdversarialError, AttackOutcome, Flip, FlipRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetattackConfig {
    /// Global flip budget as a fraction of the edge count.
    pub budget_fraction: f64,
    /// Absolute budget, overriding the fraction.
    pub budget: Option<usize>,
    pub train_fraction: f64,
    /// Attack loss on unlabeled nodes against the clean surrogate's
    /// predictions; otherwise on every node against the given labels.
    pub self_training: bool,
    pub significance: f64,
    /// Largest graph handled with a dense adjacency gradient.
    pub dense_limit: usize,
    /// Inner training run, repeated before every flip.
    pub surrogate: SurrogateConfig,
}

impl Default for MetattackConfig {
    fn default() -> Self {
        Self {
            budget_fraction: 0.05,
            budget: None,
            train_fraction: 0.1,
            self_training: true,
            significance: 0.05,
            dense_limit: 3000,
            surrogate: SurrogateConfig { epochs: 100, ..SurrogateConfig::default() },
        }
    }
}

impl MetattackConfig {
    pub fn budget_for(&self, m: usize) -> usize {
        self.budget.unwrap_or_else(|| (self.budget_fraction * m as f64).round() as usize)
    }
}

/// Loss and gradient of `CE(Â²·xw)` with respect to a dense adjacency `a`,
/// where `Â = D̃^{-1/2}(A + I)D̃^{-1/2}`.
pub fn adjacency_gradient_dense<T: Scalar>(
    a: &Tensor<T>,
    xw: &Tensor<T>,
    rows: &Arc<Vec<usize>>,
    targets: &Arc<Vec<usize>>,
) -> Result<(T, Tensor<T>), AdversarialError> {
    let n = a.rows();
    let mut t = Tape::new();
    let av = t.param(a.clone());
    let eye = t.constant(Tensor::identity(n));
    let tilde = t.add(av, eye)?;
    let deg = t.row_sum(tilde)?;
    let dinv = t.powf(deg, T::of(-0.5))?;
    let left = t.mul(tilde, dinv)?;
    let dinv_t = t.transpose(dinv)?;
    let ahat = t.mul(left, dinv_t)?;
    let xv = t.constant(xw.clone());
    let h = t.matmul(ahat, xv)?;
    let z = t.matmul(ahat, h)?;
    let loss = t.cross_entropy(z, rows, targets)?;
    let grads = t.backward(loss)?;
    Ok((t.value(loss).item(), grads.get_or_zeros(av, a)))
}

/// Same loss with the adjacency given as weights on `pairs` (`u < v`);
/// returns `∂L/∂w_p` for every pair, which equals `g_uv + g_vu` of the
/// dense route.
pub fn adjacency_gradient_sparse<T: Scalar>(
    n: usize,
    pairs: &[(usize, usize)],
    weights: &[T],
    xw: &Tensor<T>,
    rows: &Arc<Vec<usize>>,
    targets: &Arc<Vec<usize>>,
) -> Result<(T, Vec<T>), AdversarialError> {
    if pairs.len() != weights.len() {
        return Err(AdversarialError::Config(format!("{} pairs with {} weights", pairs.len(), weights.len())));
    }
    let p = pairs.len();
    // directed entries sorted by (row, col); the self-loop weight sits at index p
    let mut entries: Vec<(usize, usize, usize)> = Vec::with_capacity(2 * p + n);
    for (k, &(u, v)) in pairs.iter().enumerate() {
        if u >= v || v >= n {
            return Err(AdversarialError::Config(format!("pair ({u}, {v}) is not u < v < {n}")));
        }
        entries.push((u, v, k));
        entries.push((v, u, k));
    }
    entries.extend((0..n).map(|i| (i, i, p)));
    entries.sort_unstable();
    let mut offsets = vec![0; n + 1];
    for &(r, _, _) in &entries {
        offsets[r + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let row_idx = Arc::new(entries.iter().map(|e| e.0).collect::<Vec<_>>());
    let col_idx = Arc::new(entries.iter().map(|e| e.1).collect::<Vec<_>>());
    let which = Arc::new(entries.iter().map(|e| e.2).collect::<Vec<_>>());
    let offsets = Arc::new(offsets);

    let mut w_ext = weights.to_vec();
    w_ext.push(T::one());
    let w_ext = Tensor::from_vec(p + 1, 1, w_ext)?;
    let mut t = Tape::new();
    let wv = t.param(w_ext.clone());
    let ew = t.gather_rows(wv, &which)?;
    let deg = t.segment_sum(ew, &offsets)?;
    let dinv = t.powf(deg, T::of(-0.5))?;
    let dr = t.gather_rows(dinv, &row_idx)?;
    let dc = t.gather_rows(dinv, &col_idx)?;
    let nw = t.mul(ew, dr)?;
    let nw = t.mul(nw, dc)?;
    let xv = t.constant(xw.clone());
    let h = t.weighted_spmm(n, &row_idx, &col_idx, nw, xv)?;
    let z = t.weighted_spmm(n, &row_idx, &col_idx, nw, h)?;
    let loss = t.cross_entropy(z, rows, targets)?;
    let grads = t.backward(loss)?;
    let g = grads.get_or_zeros(wv, &w_ext);
    Ok((t.value(loss).item(), g.data()[..p].to_vec()))
}

fn two_hop(adj: &[BTreeSet<usize>], u: usize) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for &v in &adj[u] {
        out.insert(v);
        out.extend(adj[v].iter().copied());
    }
    out.remove(&u);
    out
}

/// Candidate flips with their loss-increasing scores `g·(1 − 2A)`.
fn scored_candidates<T: Scalar>(
    adj: &[BTreeSet<usize>],
    xw: &Tensor<T>,
    rows: &Arc<Vec<usize>>,
    targets: &Arc<Vec<usize>>,
    dense_limit: usize,
) -> Result<Vec<(T, usize, usize)>, AdversarialError> {
    let n = adj.len();
    let sign = |u: usize, v: usize| if adj[u].contains(&v) { -T::one() } else { T::one() };
    if n <= dense_limit {
        let mut a = Tensor::zeros(n, n);
        for (u, s) in adj.iter().enumerate() {
            for &v in s {
                a.set(u, v, T::one());
            }
        }
        let (_, g) = adjacency_gradient_dense(&a, xw, rows, targets)?;
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for u in 0..n {
            for v in u + 1..n {
                out.push(((g.get(u, v) + g.get(v, u)) * sign(u, v), u, v));
            }
        }
        return Ok(out);
    }
    // pass 1: gradient on existing edges ranks nodes
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|u| adj[u].iter().filter(move |&&v| u < v).map(move |&v| (u, v))).collect();
    let ones = vec![T::one(); edges.len()];
    let (_, g) = adjacency_gradient_sparse(n, &edges, &ones, xw, rows, targets)?;
    let mut importance = vec![T::zero(); n];
    for (&(u, v), &gp) in edges.iter().zip(&g) {
        importance[u] += gp.abs();
        importance[v] += gp.abs();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| importance[b].total_order(&importance[a]).then(a.cmp(&b)));
    let top = (n / 100).max(10).min(n);
    // pass 2: edges plus two-hop pairs around the most influential nodes
    let mut pairs: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
    for &u in &order[..top] {
        for w in two_hop(adj, u) {
            pairs.insert((u.min(w), u.max(w)));
        }
    }
    let pairs: Vec<(usize, usize)> = pairs.into_iter().collect();
    let weights: Vec<T> = pairs.iter().map(|&(u, v)| if adj[u].contains(&v) { T::one() } else { T::zero() }).collect();
    let (_, g) = adjacency_gradient_sparse(n, &pairs, &weights, xw, rows, targets)?;
    Ok(pairs.iter().zip(g).map(|(&(u, v), gp)| (gp * sign(u, v), u, v)).collect())
}

/// First-order Metattack: before each flip the surrogate is retrained on
/// the current graph, the attack loss is differentiated with respect to
/// the adjacency at those weights, and the best admissible flip (connected,
/// degree test passing, pair not yet flipped) is applied.
pub fn metattack<T: Scalar, R: Rng + ?Sized>(
    g: &Graph,
    x: &Tensor<T>,
    labels: &Partition,
    cfg: &MetattackConfig,
    rng: &mut R,
) -> Result<AttackOutcome<T>, AdversarialError> {
    let budget = cfg.budget_for(g.m());
    let split = stratified_split(labels, cfg.train_fraction, rng);
    let (rows, targets) = if cfg.self_training {
        let clean = train_surrogate(g, x, labels, &split, &cfg.surrogate, rng)?;
        let pseudo = extract_partition(&clean.logits()?);
        let labeled: BTreeSet<usize> = split.iter().copied().collect();
        let rows: Vec<usize> = (0..g.n()).filter(|i| !labeled.contains(i)).collect();
        let targets = rows.iter().map(|&i| pseudo.label(i)).collect();
        (rows, targets)
    } else {
        ((0..g.n()).collect(), labels.labels().to_vec())
    };
    if rows.is_empty() {
        return Err(AdversarialError::Config("no nodes left for the attack loss".into()));
    }
    let (rows, targets) = (Arc::new(rows), Arc::new(targets));
    let mut adj = adjacency_sets(g);
    let orig: Vec<usize> = adj.iter().map(BTreeSet::len).collect();
    let mut flipped = BTreeSet::new();
    let mut flips = Vec::with_capacity(budget);
    for _ in 0..budget {
        let current = graph_from_sets(g, &adj)?;
        let s = train_surrogate(&current, x, labels, &split, &cfg.surrogate, rng)?;
        let xw = s.project(x)?;
        let mut cands = scored_candidates(&adj, &xw, &rows, &targets, cfg.dense_limit)?;
        cands.retain(|&(_, u, v)| !flipped.contains(&(u, v)));
        let descending = |a: &(T, usize, usize), b: &(T, usize, usize)| b.0.total_order(&a.0).then((a.1, a.2).cmp(&(b.1, b.2)));
        // most flips are settled among the first few candidates
        let head = cands.len().min(64);
        if head < cands.len() {
            cands.select_nth_unstable_by(head, descending);
        }
        cands[..head].sort_by(descending);
        let mut chosen = None;
        for i in 0..cands.len() {
            if i == head {
                cands[head..].sort_by(descending);
            }
            let (score, u, v) = cands[i];
            if structure_flip_allowed(&mut adj, &orig, u, v, cfg.significance)? {
                chosen = Some((score, u, v));
                break;
            }
        }
        let Some((score, u, v)) = chosen else { break };
        let added = toggle(&mut adj, u, v);
        flipped.insert((u, v));
        flips.push(FlipRecord { flip: Flip::Edge { u, v, added }, target: None, score: score.to_f64_lossy() });
    }
    Ok(AttackOutcome { graph: graph_from_sets(g, &adj)?, x: x.clone(), flips })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversarial::degree_likelihood_test;
    use crate::graph::{degrees, is_connected};
    use crate::synth::{gen_attributes, lfr_generate, AttributeParams, LfrParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(n_nodes: usize, seed: u64) -> (Graph, Partition, Tensor<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // ring of cliques
        let k = n_nodes / 5;
        let mut e = Vec::new();
        for c in 0..k {
            let base = c * 5;
            for i in base..base + 5 {
                for j in i + 1..base + 5 {
                    e.push((i, j));
                }
            }
            e.push((base + 4, (base + 5) % (k * 5)));
        }
        let labels = Partition::new((0..k * 5).map(|i| i / 5).collect(), k).unwrap();
        let g = Graph::from_edges(k * 5, &e).unwrap();
        let x = gen_attributes(&labels, &AttributeParams { d: 6, sigma_c: 1.0, sigma: 1.0 }, &mut rng).unwrap();
        (g, labels, x)
    }

    fn random_xw(n: usize, k: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(n, k, (0..n * k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn dense_and_sparse_gradients_agree() {
        let (g, labels, _) = instance(15, 1);
        let n = g.n();
        let xw = random_xw(n, 3, 2);
        let rows = Arc::new((0..n).collect::<Vec<_>>());
        let targets = Arc::new(labels.labels().iter().map(|&l| l % 3).collect::<Vec<_>>());
        let a: Tensor<f64> = g.dense_adjacency();
        let (ld, gd) = adjacency_gradient_dense(&a, &xw, &rows, &targets).unwrap();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        let w: Vec<f64> = pairs.iter().map(|&(u, v)| a.get(u, v)).collect();
        let (ls, gs) = adjacency_gradient_sparse(n, &pairs, &w, &xw, &rows, &targets).unwrap();
        assert!((ld - ls).abs() < 1e-12);
        for (&(u, v), &gp) in pairs.iter().zip(&gs) {
            assert!((gd.get(u, v) + gd.get(v, u) - gp).abs() < 1e-10, "({u}, {v})");
        }
    }

    #[test]
    fn sparse_gradient_matches_finite_differences() {
        let (g, labels, _) = instance(10, 3);
        let n = g.n();
        let xw = random_xw(n, 2, 4);
        let rows = Arc::new((0..n).collect::<Vec<_>>());
        let targets = Arc::new(labels.labels().iter().map(|&l| l % 2).collect::<Vec<_>>());
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        let w: Vec<f64> = pairs.iter().map(|&(u, v)| if g.has_edge(u, v) { 1.0 } else { 0.0 }).collect();
        let (_, grad) = adjacency_gradient_sparse(n, &pairs, &w, &xw, &rows, &targets).unwrap();
        let h = 1e-6;
        for p in (0..pairs.len()).step_by(5) {
            let mut up = w.clone();
            up[p] += h;
            let mut down = w.clone();
            down[p] -= h;
            let (lu, _) = adjacency_gradient_sparse(n, &pairs, &up, &xw, &rows, &targets).unwrap();
            let (ld, _) = adjacency_gradient_sparse(n, &pairs, &down, &xw, &rows, &targets).unwrap();
            let fd = (lu - ld) / (2.0 * h);
            assert!((fd - grad[p]).abs() <= 1e-6 * fd.abs().max(1.0), "pair {p}: {fd} vs {}", grad[p]);
        }
    }

    #[test]
    fn zero_budget_is_identity() {
        let (g, labels, x) = instance(20, 5);
        let cfg = MetattackConfig { budget: Some(0), ..Default::default() };
        let out = metattack(&g, &x, &labels, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(out.graph, g);
        assert!(out.flips.is_empty());
    }

    fn check_invariants(g: &Graph, out: &AttackOutcome<f64>, budget: usize) {
        assert!(out.flips.len() <= budget);
        assert!(is_connected(&out.graph));
        assert!(degree_likelihood_test(&degrees(g), &degrees(&out.graph), 0.05).unwrap().pass);
        let changed = g.edges().iter().filter(|&&(u, v)| !out.graph.has_edge(u, v)).count()
            + out.graph.edges().iter().filter(|&&(u, v)| !g.has_edge(u, v)).count();
        assert_eq!(changed, out.flips.len());
    }

    #[test]
    fn flips_respect_budget_connectivity_and_degrees() {
        let (g, labels, x) = instance(30, 6);
        for self_training in [true, false] {
            let cfg = MetattackConfig { budget: Some(6), self_training, ..Default::default() };
            let out = metattack(&g, &x, &labels, &cfg, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
            check_invariants(&g, &out, 6);
            assert_eq!(out.x, x);
        }
    }

    #[test]
    fn restricted_candidate_route_respects_invariants() {
        let (g, labels, x) = instance(40, 7);
        let cfg = MetattackConfig { budget: Some(5), dense_limit: 0, ..Default::default() };
        let out = metattack(&g, &x, &labels, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        check_invariants(&g, &out, 5);
    }

    #[test]
    fn deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (g, labels) = lfr_generate(&LfrParams::desk(0.1), &mut rng).unwrap();
        let x = gen_attributes(&labels, &AttributeParams { d: 8, sigma_c: 3.0, sigma: 2.0 }, &mut rng).unwrap();
        let cfg = MetattackConfig { budget: Some(3), ..Default::default() };
        let a = metattack(&g, &x, &labels, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = metattack(&g, &x, &labels, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(cfg.budget_for(1500), 3);
        assert_eq!(MetattackConfig::default().budget_for(1500), 75);
    }
}
