use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{is_connected, Graph, Partition};

use super::powerlaw::{powerlaw_mean, sample_powerlaw};
use super::SynthError;

/// LFR benchmark parameters. Exponents are negative (`P(k) ∝ k^alpha`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LfrParams {
    pub n: usize,
    pub avg_k: f64,
    pub max_k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub min_c: usize,
    pub max_c: usize,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
}

fn default_retries() -> usize {
    20
}

impl Default for LfrParams {
    fn default() -> Self {
        Self::with_mu(1000, 0.1)
    }
}

impl LfrParams {
    /// Table defaults: `max_k = max_c = 0.1·n`, `avg_k = 25`.
    pub fn with_mu(n: usize, mu: f64) -> Self {
        Self {
            n,
            avg_k: 25.0,
            max_k: n / 10,
            alpha: -2.0,
            beta: -1.1,
            mu,
            min_c: 20,
            max_c: n / 10,
            max_retries: default_retries(),
        }
    }

    /// Scaled-down instance for quick experiments: `n = 300`, `avg_k = 10`.
    pub fn desk(mu: f64) -> Self {
        Self {
            avg_k: 10.0,
            ..Self::with_mu(300, mu)
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidParams(msg));
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return bad(format!("mu = {} must lie in (0, 1)", self.mu));
        }
        if self.min_c == 0 || self.min_c > self.max_c || self.max_c > self.n {
            return bad(format!(
                "community bounds need 1 <= min_c ({}) <= max_c ({}) <= n ({})",
                self.min_c, self.max_c, self.n
            ));
        }
        if self.max_k == 0 || self.max_k >= self.n {
            return bad(format!("max_k = {} must lie in [1, n)", self.max_k));
        }
        if !(self.avg_k >= 1.0 && self.avg_k <= self.max_k as f64) {
            return bad(format!("avg_k = {} must lie in [1, max_k = {}]", self.avg_k, self.max_k));
        }
        if self.alpha >= 0.0 || self.beta >= 0.0 {
            return bad(format!("exponents must be negative, got {} and {}", self.alpha, self.beta));
        }
        Ok(())
    }
}

/// Two adjacent integer minimum degrees and the probability of using the
/// lower one, so that the mixture mean equals `avg_k` exactly.
fn min_degree_mixture(p: &LfrParams) -> Result<(usize, usize, f64), SynthError> {
    let mean = |lo: usize| powerlaw_mean(p.alpha, lo, p.max_k);
    if mean(1) > p.avg_k {
        return Err(SynthError::Infeasible(format!(
            "average degree {} is below the minimum reachable mean {:.2}",
            p.avg_k,
            mean(1)
        )));
    }
    let mut lo = 1;
    while lo < p.max_k && mean(lo + 1) <= p.avg_k {
        lo += 1;
    }
    if lo == p.max_k {
        return Ok((lo, lo, 1.0));
    }
    let (a, b) = (mean(lo), mean(lo + 1));
    let w = (b - p.avg_k) / (b - a);
    Ok((lo, lo + 1, w))
}

fn sample_degrees<R: Rng + ?Sized>(p: &LfrParams, rng: &mut R) -> Result<Vec<usize>, SynthError> {
    let (lo, hi, w) = min_degree_mixture(p)?;
    let low = sample_powerlaw(p.alpha, lo, p.max_k, p.n, rng)?;
    let high = sample_powerlaw(p.alpha, hi, p.max_k, p.n, rng)?;
    Ok((0..p.n)
        .map(|i| if rng.random::<f64>() < w { low[i] } else { high[i] })
        .collect())
}

/// Community sizes summing to `n`: draw until the next draw would overflow,
/// then close with the remainder (or spread it over existing communities
/// when it is below `min_c`).
fn sample_sizes<R: Rng + ?Sized>(p: &LfrParams, rng: &mut R) -> Result<Vec<usize>, SynthError> {
    let mut sizes = Vec::new();
    let mut total = 0;
    loop {
        let s = sample_powerlaw(p.beta, p.min_c, p.max_c, 1, rng)?[0];
        if total + s <= p.n {
            sizes.push(s);
            total += s;
            if total == p.n {
                break;
            }
            continue;
        }
        let rest = p.n - total;
        if rest >= p.min_c {
            sizes.push(rest);
        } else {
            for _ in 0..rest {
                let open: Vec<usize> = (0..sizes.len()).filter(|&c| sizes[c] < p.max_c).collect();
                if open.is_empty() {
                    return Err(SynthError::Infeasible(format!(
                        "community sizes in [{}, {}] cannot cover {} nodes",
                        p.min_c, p.max_c, p.n
                    )));
                }
                sizes[open[rng.random_range(0..open.len())]] += 1;
            }
        }
        break;
    }
    Ok(sizes)
}

/// Places nodes (largest internal degree first) into communities with room
/// and enough members to absorb their internal stubs.
fn assign<R: Rng + ?Sized>(k_in: &[usize], sizes: &[usize], rng: &mut R) -> Option<Vec<usize>> {
    let mut order: Vec<usize> = (0..k_in.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| std::cmp::Reverse(k_in[i]));
    let mut free = sizes.to_vec();
    let mut label = vec![0; k_in.len()];
    for i in order {
        let weights: Vec<usize> = (0..sizes.len())
            .map(|c| if free[c] > 0 && sizes[c] > k_in[i] { free[c] } else { 0 })
            .collect();
        let total: usize = weights.iter().sum();
        if total == 0 {
            return None;
        }
        let mut pick = rng.random_range(0..total);
        let c = weights
            .iter()
            .position(|&w| {
                if pick < w {
                    true
                } else {
                    pick -= w;
                    false
                }
            })
            .expect("pick below total");
        free[c] -= 1;
        label[i] = c;
    }
    Some(label)
}

fn key(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

/// Pairs shuffled stubs, then repairs self-loops, repeated edges and (when
/// `labels` is given) intra-community pairs by double-edge swaps. Edges that
/// cannot be repaired within the attempt cap are dropped.
fn match_stubs<R: Rng + ?Sized>(
    mut stubs: Vec<usize>,
    labels: Option<&[usize]>,
    taken: &mut HashSet<(usize, usize)>,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    stubs.shuffle(rng);
    let mut edges: Vec<(usize, usize)> = stubs.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    if edges.is_empty() {
        return edges;
    }
    let ok_pair = |u: usize, v: usize| u != v && labels.is_none_or(|l| l[u] != l[v]);
    let mut good = vec![false; edges.len()];
    for (i, &(u, v)) in edges.iter().enumerate() {
        if ok_pair(u, v) && taken.insert(key(u, v)) {
            good[i] = true;
        }
    }
    let mut bad: Vec<usize> = (0..edges.len()).filter(|&i| !good[i]).collect();
    let cap = 100 * edges.len();
    let mut attempts = 0;
    while let Some(&i) = bad.last() {
        if attempts >= cap {
            break;
        }
        attempts += 1;
        let j = rng.random_range(0..edges.len());
        if j == i {
            continue;
        }
        let (a, b) = edges[i];
        let (c, d) = edges[j];
        let (x, y) = if rng.random::<bool>() { ((a, c), (b, d)) } else { ((a, d), (b, c)) };
        if !ok_pair(x.0, x.1) || !ok_pair(y.0, y.1) || key(x.0, x.1) == key(y.0, y.1) {
            continue;
        }
        if taken.contains(&key(x.0, x.1)) || taken.contains(&key(y.0, y.1)) {
            continue;
        }
        if good[j] {
            taken.remove(&key(c, d));
        }
        taken.insert(key(x.0, x.1));
        taken.insert(key(y.0, y.1));
        edges[i] = x;
        edges[j] = y;
        good[i] = true;
        bad.pop();
        if !good[j] {
            good[j] = true;
            bad.retain(|&e| e != j);
        }
    }
    edges
        .into_iter()
        .zip(good)
        .filter_map(|(e, g)| g.then_some(e))
        .collect()
}

fn attempt<R: Rng + ?Sized>(p: &LfrParams, rng: &mut R) -> Result<Option<(Graph, Partition)>, SynthError> {
    let degrees = sample_degrees(p, rng)?;
    let sizes = sample_sizes(p, rng)?;
    let largest = *sizes.iter().max().expect("at least one community");
    // stochastic rounding keeps the expected internal fraction at 1 − μ
    let mut k_in: Vec<usize> = degrees
        .iter()
        .map(|&k| {
            let x = (1.0 - p.mu) * k as f64;
            let f = x.floor();
            let r = if rng.random::<f64>() < x - f { f + 1.0 } else { f };
            (r as usize).min(largest - 1)
        })
        .collect();
    let Some(labels) = assign(&k_in, &sizes, rng) else {
        return Ok(None);
    };
    // each community needs an even number of internal stubs
    let mut members = vec![Vec::new(); sizes.len()];
    for (i, &c) in labels.iter().enumerate() {
        members[c].push(i);
    }
    for m in &members {
        if m.iter().map(|&i| k_in[i]).sum::<usize>() % 2 == 1 {
            let with: Vec<usize> = m.iter().copied().filter(|&i| k_in[i] > 0).collect();
            let i = with[rng.random_range(0..with.len())];
            k_in[i] -= 1;
        }
    }
    let mut taken = HashSet::new();
    let mut edges = Vec::new();
    for m in &members {
        let stubs: Vec<usize> = m.iter().flat_map(|&i| std::iter::repeat_n(i, k_in[i])).collect();
        edges.extend(match_stubs(stubs, None, &mut taken, rng));
    }
    let mut out_stubs: Vec<usize> = (0..p.n)
        .flat_map(|i| std::iter::repeat_n(i, degrees[i] - k_in[i].min(degrees[i])))
        .collect();
    if out_stubs.len() % 2 == 1 {
        let idx = rng.random_range(0..out_stubs.len());
        out_stubs.swap_remove(idx);
    }
    edges.extend(match_stubs(out_stubs, Some(&labels), &mut taken, rng));
    let g = Graph::from_edges(p.n, &edges)?;
    if !is_connected(&g) {
        return Ok(None);
    }
    let part = Partition::new(labels, sizes.len())?;
    let g = g.with_labels(part.clone())?;
    Ok(Some((g, part)))
}

/// LFR graph with a planted partition, regenerated until connected.
pub fn lfr_generate<R: Rng + ?Sized>(p: &LfrParams, rng: &mut R) -> Result<(Graph, Partition), SynthError> {
    p.validate()?;
    for _ in 0..p.max_retries.max(1) {
        if let Some(out) = attempt(p, rng)? {
            return Ok(out);
        }
    }
    Err(SynthError::RetriesExhausted(p.max_retries.max(1)))
}
