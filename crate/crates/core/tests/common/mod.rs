//! Test-side reference implementations. Each one is written from the
//! defining formula and shares no code path with the library routine it
//! checks.

#![allow(dead_code)]

use std::io::Write;

use commrobust::graph::{is_connected, Graph, Partition};
use commrobust::tensor::Tensor;
use rand::Rng;

/// Writes one verdict line straight to stderr so it shows without
/// `--nocapture`.
pub fn verdict(id: usize, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {id:>2} [{tag}] {name}: {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
}

pub fn random_partition<R: Rng>(n: usize, k: usize, rng: &mut R) -> Partition {
    Partition::from_labels((0..n).map(|_| rng.random_range(0..k)).collect())
}

/// Random spanning tree plus each remaining pair with probability `p`.
pub fn random_connected<R: Rng>(n: usize, p: f64, rng: &mut R) -> Graph {
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.push((u, v));
    }
    for u in 0..n {
        for v in u + 1..n {
            if !edges.contains(&(u, v)) && rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

/// `p_ij = (1 − α)[i = j] + α[c(i) = c(j)]/|c(i)|`.
pub fn closed_form_affinity(labels: &[usize], alpha: f64) -> Vec<Vec<f64>> {
    let n = labels.len();
    (0..n)
        .map(|i| {
            let size = labels.iter().filter(|&&c| c == labels[i]).count() as f64;
            (0..n)
                .map(|j| {
                    let same = if labels[i] == labels[j] { alpha / size } else { 0.0 };
                    same + if i == j { 1.0 - alpha } else { 0.0 }
                })
                .collect()
        })
        .collect()
}

/// `1 − Σ_i ‖p_i − q_i‖₁ / (2αn)`.
pub fn ecs_from_affinities(a: &[Vec<f64>], b: &[Vec<f64>], alpha: f64) -> f64 {
    let n = a.len() as f64;
    let l1: f64 = a.iter().zip(b).flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs())).sum();
    1.0 - l1 / (2.0 * alpha * n)
}

/// `Q = 1/2m Σ_ij (A_ij − d_i d_j / 2m) δ(c_i, c_j)` as a double loop.
pub fn modularity_by_summation(g: &Graph, p: &Partition) -> f64 {
    let two_m = 2.0 * g.m() as f64;
    let mut q = 0.0;
    for i in 0..g.n() {
        for j in 0..g.n() {
            if p.label(i) != p.label(j) {
                continue;
            }
            let a = if g.has_edge(i, j) { 1.0 } else { 0.0 };
            q += a - (g.degree(i) * g.degree(j)) as f64 / two_m;
        }
    }
    q / two_m
}

/// Betweenness by listing every shortest path explicitly: for each pair,
/// depth-first search over simple paths, keeping those of minimum length.
pub fn brute_force_betweenness(g: &Graph) -> Vec<f64> {
    fn walk(g: &Graph, u: usize, t: usize, seen: &mut [bool], path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if u == t {
            out.push(path.clone());
            return;
        }
        for &v in g.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                path.push(v);
                walk(g, v, t, seen, path, out);
                path.pop();
                seen[v] = false;
            }
        }
    }
    let n = g.n();
    let mut score = vec![0.0; n];
    for s in 0..n {
        for t in s + 1..n {
            let mut paths = Vec::new();
            let mut seen = vec![false; n];
            seen[s] = true;
            walk(g, s, t, &mut seen, &mut vec![s], &mut paths);
            let shortest = paths.iter().map(Vec::len).min().unwrap();
            let best: Vec<&Vec<usize>> = paths.iter().filter(|p| p.len() == shortest).collect();
            let total = best.len() as f64;
            for p in &best {
                for &v in &p[1..p.len() - 1] {
                    score[v] += 1.0 / total;
                }
            }
        }
    }
    score
}

/// `D^{-1/2}(A + I)D^{-1/2}` built densely.
pub fn dense_normalized(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.n();
    let d: Vec<f64> = (0..n).map(|u| (g.degree(u) + 1) as f64).collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let a = if i == j || g.has_edge(i, j) { 1.0 } else { 0.0 };
                    a / (d[i] * d[j]).sqrt()
                })
                .collect()
        })
        .collect()
}

/// Surrogate margin `z_y − max_{c≠y} z_c` of `target`, with
/// `z = Â² · (sX) · W` recomputed from nothing but the adjacency.
pub fn surrogate_margin(g: &Graph, x: &Tensor<f64>, w: &Tensor<f64>, scale: f64, target: usize, y: usize) -> f64 {
    let a = dense_normalized(g);
    let n = g.n();
    let k = w.cols();
    let xw: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..k).map(|c| (0..x.cols()).map(|f| scale * x.get(i, f) * w.get(f, c)).sum()).collect())
        .collect();
    let ax: Vec<Vec<f64>> = (0..n).map(|i| (0..k).map(|c| (0..n).map(|j| a[i][j] * xw[j][c]).sum()).collect()).collect();
    let z: Vec<f64> = (0..k).map(|c| (0..n).map(|j| a[target][j] * ax[j][c]).sum()).collect();
    let other = (0..k).filter(|&c| c != y).map(|c| z[c]).fold(f64::NEG_INFINITY, f64::max);
    z[y] - other
}

/// Largest margin decrease over every single edge flip touching `target`
/// that keeps the graph connected and passes `admissible`.
pub fn exhaustive_best_flip(
    g: &Graph,
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    scale: f64,
    target: usize,
    y: usize,
    admissible: impl Fn(&Graph) -> bool,
) -> Option<f64> {
    let base = surrogate_margin(g, x, w, scale, target, y);
    let mut best: Option<f64> = None;
    for v in 0..g.n() {
        if v == target {
            continue;
        }
        let (a, b) = (target.min(v), target.max(v));
        let mut edges = g.edges();
        if g.has_edge(a, b) {
            edges.retain(|&e| e != (a, b));
        } else {
            edges.push((a, b));
        }
        let h = Graph::from_edges(g.n(), &edges).unwrap();
        if !is_connected(&h) || !admissible(&h) {
            continue;
        }
        let score = base - surrogate_margin(&h, x, w, scale, target, y);
        best = Some(best.map_or(score, |s: f64| s.max(score)));
    }
    best
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
