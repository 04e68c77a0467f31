use std::collections::{BTreeSet, VecDeque};
use std::iter::once;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, Partition};
use crate::models::stratified_split;
use crate::perturb::select_count;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::cooccurrence::{is_binary, CooccurrenceIndex};
use super::degree_test::degree_likelihood_test;
use super::surrogate::{train_surrogate, Surrogate, SurrogateConfig};
use super::{AdversarialError, AttackOutcome, Flip, FlipRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NettackConfig {
    /// Fraction of nodes attacked, sampled uniformly.
    pub target_fraction: f64,
    /// Per-target budget is `degree(target) + extra_budget`.
    pub extra_budget: usize,
    pub structure: bool,
    pub features: bool,
    pub significance: f64,
    /// Step for real-valued feature nudges; `None` uses the standard
    /// deviation of all attribute entries.
    pub feature_nudge: Option<f64>,
    /// Labeled fraction per class for the surrogate.
    pub train_fraction: f64,
    pub surrogate: SurrogateConfig,
}

impl Default for NettackConfig {
    fn default() -> Self {
        Self {
            target_fraction: 0.1,
            extra_budget: 2,
            structure: true,
            features: true,
            significance: 0.05,
            feature_nudge: None,
            train_fraction: 0.1,
            surrogate: SurrogateConfig::default(),
        }
    }
}

fn entry_sd<T: Scalar>(x: &Tensor<T>) -> f64 {
    let n = x.len().max(1) as f64;
    let mean = x.data().iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n;
    (x.data().iter().map(|v| (v.to_f64_lossy() - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Row `t` of `Â²·xw` with `Â` the self-looped symmetric normalization of `adj`.
pub(crate) fn propagated_row<T: Scalar>(adj: &[BTreeSet<usize>], t: usize, xw: &Tensor<T>) -> Vec<T> {
    let deg = |u: usize| T::of_usize(adj[u].len() + 1);
    let mut out = vec![T::zero(); xw.cols()];
    let dt = deg(t);
    for i in once(t).chain(adj[t].iter().copied()) {
        let di = deg(i);
        let a_ti = (dt * di).sqrt().recip();
        for j in once(i).chain(adj[i].iter().copied()) {
            let coef = a_ti / (di * deg(j)).sqrt();
            for (o, &v) in out.iter_mut().zip(xw.row(j)) {
                *o += coef * v;
            }
        }
    }
    out
}

/// `z[y] − max_{c≠y} z[c]`.
pub(crate) fn margin<T: Scalar>(z: &[T], y: usize) -> T {
    let best_other = z
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != y)
        .map(|(_, &v)| v)
        .fold(T::neg_infinity(), T::max);
    z[y] - best_other
}

pub(crate) fn reachable(adj: &[BTreeSet<usize>], from: usize, to: usize) -> bool {
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

pub(crate) fn toggle(adj: &mut [BTreeSet<usize>], u: usize, v: usize) -> bool {
    if adj[u].remove(&v) {
        adj[v].remove(&u);
        false
    } else {
        adj[u].insert(v);
        adj[v].insert(u);
        true
    }
}

/// Whether flipping `(u, v)` keeps the graph connected and the degree
/// sequence indistinguishable from `orig` under the likelihood test.
pub(crate) fn structure_flip_allowed(
    adj: &mut [BTreeSet<usize>],
    orig: &[usize],
    u: usize,
    v: usize,
    significance: f64,
) -> Result<bool, AdversarialError> {
    let added = toggle(adj, u, v);
    let connected = added || reachable(adj, u, v);
    let ok = connected && {
        let new: Vec<usize> = adj.iter().map(BTreeSet::len).collect();
        degree_likelihood_test(orig, &new, significance)?.pass
    };
    toggle(adj, u, v);
    Ok(ok)
}

pub(crate) fn adjacency_sets(g: &Graph) -> Vec<BTreeSet<usize>> {
    (0..g.n()).map(|u| g.neighbors(u).iter().copied().collect()).collect()
}

pub(crate) fn graph_from_sets(g: &Graph, adj: &[BTreeSet<usize>]) -> Result<Graph, AdversarialError> {
    let edges: Vec<(usize, usize)> = adj
        .iter()
        .enumerate()
        .flat_map(|(u, s)| s.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
        .collect();
    Ok(g.with_edges(&edges)?)
}

#[derive(Clone, Copy, Debug)]
enum Candidate {
    Edge(usize),
    Feature(usize, f64),
}

struct State<'a, T> {
    adj: Vec<BTreeSet<usize>>,
    x: Tensor<T>,
    /// `sX·W`, kept in sync with feature flips.
    xw: Tensor<T>,
    surrogate: &'a Surrogate<T>,
    orig_degrees: Vec<usize>,
    cooc: Option<CooccurrenceIndex>,
    nudge: f64,
    flips: Vec<FlipRecord>,
}

impl<'a, T: Scalar> State<'a, T> {
    fn new(g: &Graph, x: &Tensor<T>, surrogate: &'a Surrogate<T>, cfg: &NettackConfig) -> Result<Self, AdversarialError> {
        let adj = adjacency_sets(g);
        let orig_degrees = adj.iter().map(BTreeSet::len).collect();
        let cooc = is_binary(x).then(|| CooccurrenceIndex::new(x));
        let nudge = cfg.feature_nudge.unwrap_or_else(|| entry_sd(x));
        Ok(Self {
            adj,
            x: x.clone(),
            xw: surrogate.project(x)?,
            surrogate,
            orig_degrees,
            cooc,
            nudge,
            flips: Vec::new(),
        })
    }

    fn self_weight(&self, t: usize) -> T {
        let dt = T::of_usize(self.adj[t].len() + 1);
        once(t)
            .chain(self.adj[t].iter().copied())
            .map(|i| (dt * T::of_usize(self.adj[i].len() + 1)).recip())
            .sum()
    }

    fn feature_candidates(&self, t: usize) -> Vec<(usize, f64)> {
        let d = self.x.cols();
        match &self.cooc {
            Some(idx) => {
                let present: Vec<usize> = (0..d).filter(|&c| self.x.get(t, c) != T::zero()).collect();
                (0..d)
                    .filter_map(|c| {
                        if self.x.get(t, c) != T::zero() {
                            Some((c, -1.0))
                        } else if idx.admissible(&present, c) {
                            Some((c, 1.0))
                        } else {
                            None
                        }
                    })
                    .collect()
            }
            None => (0..d).flat_map(|c| [(c, self.nudge), (c, -self.nudge)]).collect(),
        }
    }

    /// Greedy attack on one target; returns the number of flips applied.
    fn attack(&mut self, t: usize, y: usize, budget: usize, cfg: &NettackConfig) -> Result<usize, AdversarialError> {
        let n = self.adj.len();
        let mut touched_pairs = BTreeSet::new();
        let mut touched_features = BTreeSet::new();
        for step in 0..budget {
            let z = propagated_row(&self.adj, t, &self.xw);
            let base = margin(&z, y);
            let mut scored: Vec<(T, Candidate)> = Vec::new();
            if cfg.structure {
                for v in (0..n).filter(|&v| v != t && !touched_pairs.contains(&v)) {
                    toggle(&mut self.adj, t, v);
                    let after = margin(&propagated_row(&self.adj, t, &self.xw), y);
                    toggle(&mut self.adj, t, v);
                    scored.push((base - after, Candidate::Edge(v)));
                }
            }
            if cfg.features {
                let sw = self.self_weight(t);
                for (c, delta) in self.feature_candidates(t) {
                    if touched_features.contains(&c) {
                        continue;
                    }
                    let step_c = sw * T::of(delta) * self.surrogate.input_scale;
                    let moved: Vec<T> = z.iter().zip(self.surrogate.w.row(c)).map(|(&a, &w)| a + step_c * w).collect();
                    scored.push((base - margin(&moved, y), Candidate::Feature(c, delta)));
                }
            }
            scored.sort_by(|a, b| b.0.total_order(&a.0));
            let mut applied = None;
            for (score, cand) in scored {
                match cand {
                    Candidate::Edge(v) => {
                        if structure_flip_allowed(&mut self.adj, &self.orig_degrees, t, v, cfg.significance)? {
                            let added = toggle(&mut self.adj, t, v);
                            touched_pairs.insert(v);
                            applied = Some((Flip::Edge { u: t.min(v), v: t.max(v), added }, score));
                            break;
                        }
                    }
                    Candidate::Feature(c, delta) => {
                        let new = self.x.get(t, c) + T::of(delta);
                        self.x.set(t, c, new);
                        let shift = T::of(delta) * self.surrogate.input_scale;
                        for (o, &w) in self.xw.row_mut(t).iter_mut().zip(self.surrogate.w.row(c)) {
                            *o += shift * w;
                        }
                        touched_features.insert(c);
                        applied = Some((Flip::Feature { node: t, feature: c, delta }, score));
                        break;
                    }
                }
            }
            match applied {
                Some((flip, score)) => self.flips.push(FlipRecord { flip, target: Some(t), score: score.to_f64_lossy() }),
                None => return Ok(step),
            }
        }
        Ok(budget)
    }

    fn finish(self, g: &Graph) -> Result<AttackOutcome<T>, AdversarialError> {
        Ok(AttackOutcome { graph: graph_from_sets(g, &self.adj)?, x: self.x, flips: self.flips })
    }
}

fn check_target(g: &Graph, target: usize) -> Result<(), AdversarialError> {
    if target >= g.n() {
        return Err(AdversarialError::InvalidTarget { target, n: g.n() });
    }
    Ok(())
}

/// Greedy Nettack on a single `target` against a trained `surrogate`: each
/// step applies the admissible flip that most lowers the target's
/// classification margin, until `budget` flips or no admissible flip remains.
pub fn nettack<T: Scalar>(
    g: &Graph,
    x: &Tensor<T>,
    labels: &Partition,
    surrogate: &Surrogate<T>,
    target: usize,
    budget: usize,
    cfg: &NettackConfig,
) -> Result<AttackOutcome<T>, AdversarialError> {
    check_target(g, target)?;
    let mut state = State::new(g, x, surrogate, cfg)?;
    state.attack(target, labels.label(target), budget, cfg)?;
    state.finish(g)
}

/// Full poisoning run: trains the surrogate on a stratified split, samples
/// `target_fraction` of the nodes and attacks them in turn on the evolving
/// graph, each with budget `degree + extra_budget`.
pub fn nettack_attack<T: Scalar, R: Rng + ?Sized>(
    g: &Graph,
    x: &Tensor<T>,
    labels: &Partition,
    cfg: &NettackConfig,
    rng: &mut R,
) -> Result<AttackOutcome<T>, AdversarialError> {
    let split = stratified_split(labels, cfg.train_fraction, rng);
    let surrogate = train_surrogate(g, x, labels, &split, &cfg.surrogate, rng)?;
    let count = select_count(g.n(), cfg.target_fraction).map_err(|e| AdversarialError::Config(e.to_string()))?;
    let targets = index::sample(rng, g.n(), count).into_vec();
    let mut state = State::new(g, x, &surrogate, cfg)?;
    for t in targets {
        let budget = state.adj[t].len() + cfg.extra_budget;
        state.attack(t, labels.label(t), budget, cfg)?;
    }
    state.finish(g)
}
