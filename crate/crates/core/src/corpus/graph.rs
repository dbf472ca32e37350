use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Description of [`tokenize`] recorded in run manifests.
pub const TOKENIZATION: &str = "unicode lowercase; split on runs of non-alphanumeric characters";

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// An undirected graph whose nodes carry token sequences and optional labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextualGraph {
    node_names: Vec<String>,
    edges: Vec<(NodeId, NodeId)>,
    texts: Vec<Vec<String>>,
    labels: Option<Vec<Option<usize>>>,
    label_names: Vec<String>,
    degrees: Vec<usize>,
}

impl TextualGraph {
    /// Builds and validates a graph from dense parts. Node names default to
    /// the decimal index.
    pub fn new(
        node_count: usize,
        edges: Vec<(NodeId, NodeId)>,
        texts: Vec<Vec<String>>,
    ) -> Result<Self> {
        let names = (0..node_count).map(|i| i.to_string()).collect();
        Self::from_parts(names, edges, texts, None, Vec::new())
    }

    pub fn from_parts(
        node_names: Vec<String>,
        edges: Vec<(NodeId, NodeId)>,
        texts: Vec<Vec<String>>,
        labels: Option<Vec<Option<usize>>>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        let n = node_names.len();
        if texts.len() != n {
            return Err(Error::invalid(format!(
                "{} texts for {n} nodes",
                texts.len()
            )));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut degrees = vec![0usize; n];
        for &(u, v) in &edges {
            if u >= n || v >= n {
                return Err(Error::invalid(format!("edge ({u}, {v}) out of range {n}")));
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop on node {u}")));
            }
            if !seen.insert(undirected(u, v)) {
                return Err(Error::invalid(format!("duplicate edge ({u}, {v})")));
            }
            degrees[u] += 1;
            degrees[v] += 1;
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::invalid(format!("{} labels for {n} nodes", l.len())));
            }
            if let Some(bad) = l.iter().flatten().find(|&&c| c >= label_names.len()) {
                return Err(Error::invalid(format!("label id {bad} has no name")));
            }
        }
        Ok(TextualGraph {
            node_names,
            edges,
            texts,
            labels,
            label_names,
            degrees,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn texts(&self) -> &[Vec<String>] {
        &self.texts
    }

    pub fn text(&self, v: NodeId) -> &[String] {
        &self.texts[v]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn node_name(&self, v: NodeId) -> &str {
        &self.node_names[v]
    }

    pub fn node_names(&self) -> &[String] {
        &self.node_names
    }

    pub fn labels(&self) -> Option<&[Option<usize>]> {
        self.labels.as_deref()
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Set of undirected edges as `(min, max)` pairs.
    pub fn edge_set(&self) -> HashSet<(NodeId, NodeId)> {
        self.edges.iter().map(|&(u, v)| undirected(u, v)).collect()
    }

    pub fn node_index(&self) -> HashMap<&str, NodeId> {
        self.node_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect()
    }
}

#[inline]
pub fn undirected(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Neighbor lists for a subset of edges.
pub fn adjacency(node_count: usize, edges: &[(NodeId, NodeId)]) -> Vec<Vec<NodeId>> {
    let mut adj = vec![Vec::new(); node_count];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    adj
}

pub fn degrees_of(node_count: usize, edges: &[(NodeId, NodeId)]) -> Vec<usize> {
    let mut d = vec![0; node_count];
    for &(u, v) in edges {
        d[u] += 1;
        d[v] += 1;
    }
    d
}

/// A loaded graph plus the counts of dropped edge lines.
#[derive(Clone, Debug)]
pub struct LoadedGraph {
    pub graph: TextualGraph,
    pub self_loops_dropped: usize,
    pub duplicates_dropped: usize,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn strip_eol(line: &str) -> &str {
    line.strip_suffix('\r').unwrap_or(line)
}

/// Reads an edge list, a node text file and an optional label file.
///
/// The edge file defines the node set: each non-comment line is either
/// `src dst` or a lone node id (an isolated node). Node ids are reindexed
/// densely in order of first appearance. Self-loops and duplicate undirected
/// edges are dropped and counted.
pub fn load_graph(edge_path: &Path, text_path: &Path, label_path: Option<&Path>) -> Result<LoadedGraph> {
    let edge_src = crate::io::read_to_string(edge_path)?;
    let mut index: HashMap<String, NodeId> = HashMap::new();
    let mut names: Vec<String> = Vec::new();
    let mut intern = |name: &str, names: &mut Vec<String>| -> NodeId {
        if let Some(&i) = index.get(name) {
            return i;
        }
        let i = names.len();
        index.insert(name.to_string(), i);
        names.push(name.to_string());
        i
    };
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    let (mut self_loops, mut duplicates) = (0, 0);
    for (lineno, raw) in edge_src.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => {}
            [a] => {
                intern(a, &mut names);
            }
            [a, b] => {
                let u = intern(a, &mut names);
                let v = intern(b, &mut names);
                if u == v {
                    self_loops += 1;
                } else if !seen.insert(undirected(u, v)) {
                    duplicates += 1;
                } else {
                    edges.push((u, v));
                }
            }
            _ => {
                return Err(parse_err(
                    edge_path,
                    lineno + 1,
                    format!("expected `src dst`, found {} fields", fields.len()),
                ))
            }
        }
    }
    let by_name: HashMap<String, NodeId> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();

    let text_src = crate::io::read_to_string(text_path)?;
    let mut texts: Vec<Option<Vec<String>>> = vec![None; names.len()];
    for (lineno, raw) in text_src.lines().enumerate() {
        let line = strip_eol(raw);
        if line.trim().is_empty() {
            continue;
        }
        let (id, body) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(text_path, lineno + 1, "expected `node_id<TAB>text`"))?;
        let v = *by_name
            .get(id.trim())
            .ok_or_else(|| parse_err(text_path, lineno + 1, format!("unknown node id `{id}`")))?;
        if texts[v].is_some() {
            return Err(parse_err(text_path, lineno + 1, format!("second text for node `{id}`")));
        }
        texts[v] = Some(tokenize(body));
    }
    let texts: Vec<Vec<String>> = texts.into_iter().map(Option::unwrap_or_default).collect();

    let (labels, label_names) = match label_path {
        None => (None, Vec::new()),
        Some(lp) => {
            let src = crate::io::read_to_string(lp)?;
            let mut raw_labels: Vec<Option<String>> = vec![None; names.len()];
            for (lineno, raw) in src.lines().enumerate() {
                let line = strip_eol(raw);
                if line.trim().is_empty() {
                    continue;
                }
                let (id, label) = line
                    .split_once('\t')
                    .ok_or_else(|| parse_err(lp, lineno + 1, "expected `node_id<TAB>label`"))?;
                let label = label.trim();
                if label.is_empty() {
                    return Err(parse_err(lp, lineno + 1, "empty label"));
                }
                let v = *by_name
                    .get(id.trim())
                    .ok_or_else(|| parse_err(lp, lineno + 1, format!("unknown node id `{id}`")))?;
                raw_labels[v] = Some(label.to_string());
            }
            // class ids follow the sorted label names, independent of file order
            let mut label_names: Vec<String> = raw_labels.iter().flatten().cloned().collect();
            label_names.sort();
            label_names.dedup();
            let labels = raw_labels
                .iter()
                .map(|l| l.as_ref().map(|l| label_names.binary_search(l).unwrap()))
                .collect();
            (Some(labels), label_names)
        }
    };

    if self_loops > 0 || duplicates > 0 {
        log::warn!(
            "{}: dropped {self_loops} self-loop(s) and {duplicates} duplicate edge(s)",
            edge_path.display()
        );
    }
    let graph = TextualGraph::from_parts(names, edges, texts, labels, label_names)?;
    Ok(LoadedGraph {
        graph,
        self_loops_dropped: self_loops,
        duplicates_dropped: duplicates,
    })
}

/// Writes a graph in the same formats [`load_graph`] reads. Every node is
/// declared on its own line first, so ids and order survive a reload.
pub fn save_graph(
    graph: &TextualGraph,
    edge_path: &Path,
    text_path: &Path,
    label_path: Option<&Path>,
) -> Result<()> {
    for name in graph.node_names() {
        if name.is_empty() || name.contains(|c: char| c.is_whitespace() || c == '#') {
            return Err(Error::invalid(format!("node id `{name}` cannot be written")));
        }
    }
    let mut e = String::new();
    for name in graph.node_names() {
        writeln!(e, "{name}").unwrap();
    }
    for &(u, v) in graph.edges() {
        writeln!(e, "{} {}", graph.node_name(u), graph.node_name(v)).unwrap();
    }
    crate::io::write_atomic(edge_path, e.as_bytes())?;

    let mut t = String::new();
    for (v, toks) in graph.texts().iter().enumerate() {
        writeln!(t, "{}\t{}", graph.node_name(v), toks.join(" ")).unwrap();
    }
    crate::io::write_atomic(text_path, t.as_bytes())?;

    if let (Some(lp), Some(labels)) = (label_path, graph.labels()) {
        let mut l = String::new();
        for (v, c) in labels.iter().enumerate() {
            if let Some(c) = c {
                writeln!(l, "{}\t{}", graph.node_name(v), graph.label_names()[*c]).unwrap();
            }
        }
        crate::io::write_atomic(lp, l.as_bytes())?;
    }
    Ok(())
}
