//! Seeded planted-partition textual graphs for smoke tests and examples.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{undirected, TextualGraph};
use crate::error::{Error, Result};
use crate::numerics::{RngStream, Substream};

/// Small-budget run configuration that fits the default planted partition in
/// well under a second.
pub const TOY_CONFIG: &str = "dim = 16
batch_size = 32
epochs = 50
pretrain_epochs = 20
max_len = 12
lr = 0.01
repetitions = 10
";

/// Communities of equal size with dense internal and sparse external edges;
/// each community draws most of its words from a private vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedPartition {
    pub communities: usize,
    pub community_size: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub community_words: usize,
    pub shared_words: usize,
    pub text_len: usize,
    /// Probability that a token comes from the community's own vocabulary.
    pub topical: f64,
}

impl Default for PlantedPartition {
    fn default() -> Self {
        PlantedPartition {
            communities: 2,
            community_size: 20,
            p_in: 0.9,
            p_out: 0.02,
            community_words: 12,
            shared_words: 12,
            text_len: 12,
            topical: 0.7,
        }
    }
}

impl PlantedPartition {
    pub fn community_of(&self, v: usize) -> usize {
        v / self.community_size
    }

    pub fn generate(&self, seed: u64) -> Result<TextualGraph> {
        let n = self.communities * self.community_size;
        if n < 2 || self.community_words == 0 || self.text_len == 0 {
            return Err(Error::invalid("planted partition needs ≥2 nodes, words and text"));
        }
        for p in [self.p_in, self.p_out, self.topical] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
            }
        }
        let mut rng = RngStream::new(seed, Substream::Split);
        let community = |v: usize| v / self.community_size;
        let mut edges = Vec::new();
        let mut set = HashSet::new();
        for u in 0..n {
            for v in u + 1..n {
                let p = if community(u) == community(v) { self.p_in } else { self.p_out };
                if rng.uniform() < p {
                    edges.push((u, v));
                    set.insert((u, v));
                }
            }
        }
        // attach isolated nodes inside their community
        let mut degree = vec![0usize; n];
        for &(u, v) in &edges {
            degree[u] += 1;
            degree[v] += 1;
        }
        for u in 0..n {
            if degree[u] == 0 && self.community_size > 1 {
                let base = community(u) * self.community_size;
                let mut v = base + rng.below(self.community_size - 1);
                if v >= u {
                    v += 1;
                }
                let e = undirected(u, v);
                if set.insert(e) {
                    edges.push(e);
                    degree[u] += 1;
                    degree[v] += 1;
                }
            }
        }
        let texts = (0..n)
            .map(|v| {
                (0..self.text_len)
                    .map(|_| {
                        if self.shared_words == 0 || rng.uniform() < self.topical {
                            format!("c{}w{}", community(v), rng.below(self.community_words))
                        } else {
                            format!("sw{}", rng.below(self.shared_words))
                        }
                    })
                    .collect()
            })
            .collect();
        let names = (0..n).map(|v| format!("n{v}")).collect();
        let labels = (0..n).map(|v| Some(community(v))).collect();
        let label_names = (0..self.communities).map(|c| format!("c{c}")).collect();
        TextualGraph::from_parts(names, edges, texts, Some(labels), label_names)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let pp = PlantedPartition::default();
        let g = pp.generate(1).unwrap();
        assert_eq!(g.node_count(), 40);
        assert!(g.degrees().iter().all(|&d| d > 0));
        assert_eq!(g, pp.generate(1).unwrap());
        let intra = g.edges().iter().filter(|(u, v)| u / 20 == v / 20).count();
        assert!(intra * 2 > g.edge_count());
    }
}
