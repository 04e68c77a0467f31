use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::graph::{largest_component, Graph, Partition};
use crate::tensor::Tensor;

use super::HarnessError;

/// A citation network reduced to its largest component, plus the raw counts
/// seen before the reduction.
#[derive(Clone, Debug)]
pub struct ContentCites {
    pub graph: Graph,
    pub class_names: Vec<String>,
    /// Paper ids of the kept nodes, in node order.
    pub node_ids: Vec<String>,
    pub raw_nodes: usize,
    /// Nonzero entries of the symmetrized raw adjacency (twice the
    /// undirected edge count).
    pub raw_arcs: usize,
    /// Citation lines naming an id absent from the content file.
    pub dropped_citations: usize,
}

impl ContentCites {
    pub fn attribute_dim(&self) -> usize {
        self.graph.attrs().map_or(0, |x| x.cols())
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }
}

fn lines(path: &Path) -> Result<Vec<String>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    BufReader::new(file).lines().collect::<Result<_, _>>().map_err(|e| HarnessError::io(path, e))
}

/// Loads `<id> f_1 .. f_d <label>` content rows and `<cited> <citing>`
/// citation rows (tab or space separated). Attributes are binary, labels are
/// class names mapped to integers in sorted order, and the graph is
/// symmetrized and cut to its largest connected component.
pub fn load_content_cites(content: &Path, cites: &Path) -> Result<ContentCites, HarnessError> {
    let mut ids = Vec::new();
    let mut index = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels = Vec::new();
    let mut dim = None;
    for (i, line) in lines(content)?.iter().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 3 {
            return Err(HarnessError::parse(content, i + 1, "expected id, features and label"));
        }
        let d = fields.len() - 2;
        if *dim.get_or_insert(d) != d {
            return Err(HarnessError::parse(content, i + 1, format!("expected {} features, found {d}", dim.unwrap())));
        }
        let row = fields[1..=d]
            .iter()
            .map(|f| match *f {
                "0" | "0.0" => Ok(0.0),
                "1" | "1.0" => Ok(1.0),
                other => Err(HarnessError::parse(content, i + 1, format!("non-binary feature `{other}`"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let id = fields[0].to_string();
        if index.insert(id.clone(), ids.len()).is_some() {
            return Err(HarnessError::parse(content, i + 1, format!("duplicate id `{id}`")));
        }
        ids.push(id);
        rows.push(row);
        raw_labels.push(fields[d + 1].to_string());
    }
    let n = ids.len();
    if n == 0 {
        return Err(HarnessError::Data(format!("{}: no nodes", content.display())));
    }
    let class_names: Vec<String> = raw_labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let class_of: BTreeMap<&str, usize> = class_names.iter().enumerate().map(|(c, s)| (s.as_str(), c)).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|s| class_of[s.as_str()]).collect();

    let mut edges = BTreeSet::new();
    let mut dropped = 0usize;
    for (i, line) in lines(cites)?.iter().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(HarnessError::parse(cites, i + 1, "expected `<cited> <citing>`"));
        }
        match (index.get(fields[0]), index.get(fields[1])) {
            (Some(&u), Some(&v)) if u != v => {
                edges.insert((u.min(v), u.max(v)));
            }
            (Some(_), Some(_)) => {}
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} citations with unknown ids", cites.display());
    }
    let edges: Vec<_> = edges.into_iter().collect();
    let d = dim.unwrap_or(0);
    let x = Tensor::from_vec(n, d, rows.into_iter().flatten().collect()).map_err(|e| HarnessError::Data(e.to_string()))?;
    let part = Partition::new(labels, class_names.len()).map_err(|e| HarnessError::Data(e.to_string()))?;
    let raw = Graph::from_edges(n, &edges)
        .and_then(|g| g.with_attrs(x))
        .and_then(|g| g.with_labels(part))
        .map_err(|e| HarnessError::Data(e.to_string()))?;
    let (graph, keep) = largest_component(&raw);
    Ok(ContentCites {
        graph,
        class_names,
        node_ids: keep.iter().map(|&u| ids[u].clone()).collect(),
        raw_nodes: n,
        raw_arcs: 2 * edges.len(),
        dropped_citations: dropped,
    })
}
