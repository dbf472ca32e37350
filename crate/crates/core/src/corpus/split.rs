use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NodeId, TextualGraph};
use crate::error::{Error, Result};
use crate::numerics::{RngStream, Substream};

/// Train/test partition of a graph's edges, stored as edge indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub ratio: f64,
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl EdgeSplit {
    pub fn train_edges(&self, graph: &TextualGraph) -> Vec<(NodeId, NodeId)> {
        self.train.iter().map(|&i| graph.edges()[i]).collect()
    }

    pub fn test_edges(&self, graph: &TextualGraph) -> Vec<(NodeId, NodeId)> {
        self.test.iter().map(|&i| graph.edges()[i]).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_json(path)
    }
}

fn check_ratio(ratio: f64, allow_full: bool) -> Result<()> {
    let ok = ratio > 0.0 && (ratio < 100.0 || (allow_full && ratio == 100.0));
    if !ok || !ratio.is_finite() {
        let close = if allow_full { ']' } else { ')' };
        return Err(Error::invalid(format!("ratio {ratio} outside (0, 100{close}")));
    }
    Ok(())
}

/// Uniformly random edge split keeping `round(ratio% · |E|)` training edges.
pub fn split_edges(graph: &TextualGraph, ratio: f64, seed: u64) -> Result<EdgeSplit> {
    check_ratio(ratio, true)?;
    let m = graph.edge_count();
    let n_train = ((ratio / 100.0) * m as f64).round() as usize;
    let mut order: Vec<usize> = (0..m).collect();
    RngStream::new(seed, Substream::Split).shuffle(&mut order);
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(EdgeSplit {
        ratio,
        seed,
        train,
        test,
    })
}

/// Seen/unseen node partition for the inductive protocol.
///
/// Training edges have both endpoints seen; test edges touch at least one
/// unseen node (edges with both endpoints unseen included).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSplit {
    pub ratio: f64,
    pub seed: u64,
    pub seen: Vec<NodeId>,
    pub unseen: Vec<NodeId>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl NodeSplit {
    pub fn train_edges(&self, graph: &TextualGraph) -> Vec<(NodeId, NodeId)> {
        self.train.iter().map(|&i| graph.edges()[i]).collect()
    }

    pub fn test_edges(&self, graph: &TextualGraph) -> Vec<(NodeId, NodeId)> {
        self.test.iter().map(|&i| graph.edges()[i]).collect()
    }

    /// As an edge split, for code paths shared with the transductive protocol.
    pub fn as_edge_split(&self) -> EdgeSplit {
        EdgeSplit {
            ratio: self.ratio,
            seed: self.seed,
            train: self.train.clone(),
            test: self.test.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_json(path)
    }
}

/// Keeps `round(ratio% · |V|)` nodes as seen.
pub fn split_nodes_unseen(graph: &TextualGraph, ratio: f64, seed: u64) -> Result<NodeSplit> {
    check_ratio(ratio, false)?;
    let n = graph.node_count();
    let n_seen = ((ratio / 100.0) * n as f64).round() as usize;
    if n_seen >= n {
        return Err(Error::invalid(format!(
            "ratio {ratio} on {n} nodes leaves no unseen node"
        )));
    }
    if n_seen == 0 {
        return Err(Error::invalid(format!("ratio {ratio} on {n} nodes leaves no seen node")));
    }
    let mut order: Vec<NodeId> = (0..n).collect();
    RngStream::new(seed, Substream::Split).shuffle(&mut order);
    let mut seen = order[..n_seen].to_vec();
    let mut unseen = order[n_seen..].to_vec();
    seen.sort_unstable();
    unseen.sort_unstable();
    let unseen_set: HashSet<NodeId> = unseen.iter().copied().collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, &(u, v)) in graph.edges().iter().enumerate() {
        if unseen_set.contains(&u) || unseen_set.contains(&v) {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    Ok(NodeSplit {
        ratio,
        seed,
        seen,
        unseen,
        train,
        test,
    })
}
