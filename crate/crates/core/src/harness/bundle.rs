//! Text formats for graphs and partitions.
//!
//! A bundle reads
//!
//! ```text
//! commrobust-graph v1
//! nodes N
//! edges M
//! u v            (M lines, u < v)
//! attributes D   (optional; then N lines of D values)
//! labels K       (optional; then one line of N labels)
//! ```

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::graph::{Graph, Partition};
use crate::tensor::Tensor;

use super::HarnessError;

const MAGIC: &str = "commrobust-graph v1";

pub fn write_bundle(g: &Graph, path: &Path) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_bundle_to(g, &mut w).and_then(|_| w.flush()).map_err(|e| HarnessError::io(path, e))
}

fn write_bundle_to<W: Write>(g: &Graph, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "nodes {}", g.n())?;
    let edges = g.edges();
    writeln!(w, "edges {}", edges.len())?;
    for (u, v) in edges {
        writeln!(w, "{u} {v}")?;
    }
    if let Some(x) = g.attrs() {
        writeln!(w, "attributes {}", x.cols())?;
        for i in 0..x.rows() {
            let row: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
    }
    if let Some(p) = g.labels() {
        writeln!(w, "labels {}", p.k())?;
        let row: Vec<String> = p.labels().iter().map(|l| l.to_string()).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Enumerate<std::io::Lines<BufReader<std::fs::File>>>,
    line: usize,
}

impl Lines<'_> {
    fn next(&mut self) -> Result<Option<String>, HarnessError> {
        loop {
            match self.inner.next() {
                None => return Ok(None),
                Some((i, l)) => {
                    self.line = i + 1;
                    let l = l.map_err(|e| HarnessError::io(self.path, e))?;
                    if !l.trim().is_empty() {
                        return Ok(Some(l));
                    }
                }
            }
        }
    }

    fn expect(&mut self, what: &str) -> Result<String, HarnessError> {
        self.next()?.ok_or_else(|| HarnessError::parse(self.path, self.line + 1, format!("expected {what}")))
    }

    fn err(&self, msg: impl Into<String>) -> HarnessError {
        HarnessError::parse(self.path, self.line, msg)
    }

    fn header(&mut self, key: &str) -> Result<usize, HarnessError> {
        let l = self.expect(key)?;
        self.header_value(&l, key)
    }

    fn header_value(&self, l: &str, key: &str) -> Result<usize, HarnessError> {
        l.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .and_then(|r| r.trim().parse().ok())
            .ok_or_else(|| self.err(format!("expected `{key} <count>`")))
    }

    fn numbers<N: std::str::FromStr>(&self, l: &str, count: usize) -> Result<Vec<N>, HarnessError> {
        let v: Vec<N> = l
            .split_whitespace()
            .map(|f| f.parse().map_err(|_| self.err(format!("bad number `{f}`"))))
            .collect::<Result<_, _>>()?;
        if v.len() != count {
            return Err(self.err(format!("expected {count} values, found {}", v.len())));
        }
        Ok(v)
    }
}

fn open<'a>(path: &'a Path) -> Result<Lines<'a>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(Lines { path, inner: BufReader::new(file).lines().enumerate(), line: 0 })
}

pub fn read_bundle(path: &Path) -> Result<Graph, HarnessError> {
    let mut r = open(path)?;
    if r.expect("header")?.trim() != MAGIC {
        return Err(r.err(format!("expected `{MAGIC}`")));
    }
    let n = r.header("nodes")?;
    let m = r.header("edges")?;
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let l = r.expect("edge")?;
        let uv: Vec<usize> = r.numbers(&l, 2)?;
        if uv[0] >= uv[1] {
            return Err(r.err("edges must be listed once with u < v"));
        }
        edges.push((uv[0], uv[1]));
    }
    let mut g = Graph::from_edges(n, &edges).map_err(|e| r.err(e.to_string()))?;
    let mut next = r.next()?;
    if let Some(l) = next.as_deref().filter(|l| l.starts_with("attributes")) {
        let d = r.header_value(l, "attributes")?;
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let row = r.expect("attribute row")?;
            data.extend(r.numbers::<f64>(&row, d)?);
        }
        let x = Tensor::from_vec(n, d, data).map_err(|e| r.err(e.to_string()))?;
        g = g.with_attrs(x).map_err(|e| r.err(e.to_string()))?;
        next = r.next()?;
    }
    if let Some(l) = next.as_deref().filter(|l| l.starts_with("labels")) {
        let k = r.header_value(l, "labels")?;
        let row = r.expect("label row")?;
        let labels = r.numbers::<usize>(&row, n)?;
        let p = Partition::new(labels, k).map_err(|e| r.err(e.to_string()))?;
        g = g.with_labels(p).map_err(|e| r.err(e.to_string()))?;
        next = r.next()?;
    }
    if next.is_some() {
        return Err(r.err("unexpected trailing content"));
    }
    Ok(g)
}

/// One `node<TAB>label` line per node.
pub fn write_partition(p: &Partition, path: &Path) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        for (i, l) in p.labels().iter().enumerate() {
            writeln!(w, "{i}\t{l}")?;
        }
        w.flush()
    };
    body().map_err(|e| HarnessError::io(path, e))
}

/// Reads a partition file; nodes must be exactly `0..n`, in any order.
pub fn read_partition(path: &Path) -> Result<Partition, HarnessError> {
    let mut r = open(path)?;
    let mut pairs = Vec::new();
    while let Some(l) = r.next()? {
        let v: Vec<usize> = r.numbers(&l, 2)?;
        pairs.push((v[0], v[1]));
    }
    let n = pairs.len();
    let mut labels = vec![usize::MAX; n];
    for (i, &(node, label)) in pairs.iter().enumerate() {
        if node >= n || labels[node] != usize::MAX {
            return Err(HarnessError::parse(path, i + 1, format!("node {node} is out of range or repeated")));
        }
        labels[node] = label;
    }
    Ok(Partition::from_labels(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_graph() -> Graph {
        let x = Tensor::from_rows(&[vec![0.1, -2.5], vec![1e-17, 3.0], vec![f64::MAX, 0.0]]).unwrap();
        Graph::from_edges(3, &[(0, 1), (1, 2)])
            .unwrap()
            .with_attrs(x)
            .unwrap()
            .with_labels(Partition::new(vec![0, 0, 2], 3).unwrap())
            .unwrap()
    }

    #[test]
    fn bundle_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        let g = sample_graph();
        write_bundle(&g, &path).unwrap();
        assert_eq!(read_bundle(&path).unwrap(), g);
        let bare = Graph::from_edges(4, &[(0, 3)]).unwrap();
        write_bundle(&bare, &path).unwrap();
        assert_eq!(read_bundle(&path).unwrap(), bare);
    }

    #[test]
    fn bundle_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        std::fs::write(&path, format!("{MAGIC}\nnodes 3\nedges 2\n0 1\n2 1\n")).unwrap();
        assert!(matches!(read_bundle(&path), Err(HarnessError::Parse { line: 5, .. })));
        std::fs::write(&path, format!("{MAGIC}\nnodes 3\nedges 1\n0 1\nattributes 2\n1 2\n")).unwrap();
        assert!(matches!(read_bundle(&path), Err(HarnessError::Parse { .. })));
        std::fs::write(&path, "graph\n").unwrap();
        assert!(matches!(read_bundle(&path), Err(HarnessError::Parse { line: 1, .. })));
    }

    #[test]
    fn partition_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.tsv");
        let p = Partition::from_labels(vec![2, 0, 2, 1]);
        write_partition(&p, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "0\t2\n1\t0\n2\t2\n3\t1\n");
        assert_eq!(read_partition(&path).unwrap(), p);
        std::fs::write(&path, "1\t0\n0\t1\n").unwrap();
        assert_eq!(read_partition(&path).unwrap().labels(), &[1, 0]);
        std::fs::write(&path, "0\t0\n0\t1\n").unwrap();
        assert!(matches!(read_partition(&path), Err(HarnessError::Parse { line: 2, .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn random_bundles_round_trip(n in 2usize..12, seed in any::<u64>(), d in 0usize..4) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut edges = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.random_bool(0.4) {
                        edges.push((u, v));
                    }
                }
            }
            let mut g = Graph::from_edges(n, &edges).unwrap();
            if d > 0 {
                let data = (0..n * d).map(|_| rng.random_range(-1e6..1e6)).collect();
                g = g.with_attrs(Tensor::from_vec(n, d, data).unwrap()).unwrap();
            }
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("g.txt");
            write_bundle(&g, &path).unwrap();
            prop_assert_eq!(read_bundle(&path).unwrap(), g);
        }
    }
}
