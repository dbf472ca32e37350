use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{undirected, NodeId, TextualGraph};
use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix, RngStream, Substream};

const MAX_RESAMPLES: usize = 100;

/// One fake edge per test edge: a fair coin picks the endpoint to replace,
/// and the replacement is drawn uniformly from `candidates`. Results that are
/// self loops or members of `known` are redrawn.
pub fn gen_fake_edges_among(
    test: &[(NodeId, NodeId)],
    candidates: &[NodeId],
    known: &HashSet<(NodeId, NodeId)>,
    rng: &mut RngStream,
) -> Result<Vec<(NodeId, NodeId)>> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate nodes for fake edges"));
    }
    let mut out = Vec::with_capacity(test.len());
    for &(u, v) in test {
        let mut found = None;
        for _ in 0..MAX_RESAMPLES {
            let w = candidates[rng.below(candidates.len())];
            let fake = if rng.coin() { (w, v) } else { (u, w) };
            if fake.0 != fake.1 && !known.contains(&undirected(fake.0, fake.1)) {
                found = Some(fake);
                break;
            }
        }
        match found {
            Some(f) => out.push(f),
            None => {
                return Err(Error::invalid(format!(
                    "no fake edge found for ({u}, {v}) after {MAX_RESAMPLES} draws"
                )))
            }
        }
    }
    Ok(out)
}

/// Fake edges over all nodes of `graph`, avoiding every real edge.
pub fn gen_fake_edges(test: &[(NodeId, NodeId)], graph: &TextualGraph, rng: &mut RngStream) -> Result<Vec<(NodeId, NodeId)>> {
    let candidates: Vec<NodeId> = (0..graph.node_count()).collect();
    gen_fake_edges_among(test, &candidates, &graph.edge_set(), rng)
}

/// Probability that a positive outscores a negative, ties counting half,
/// via the rank-sum statistic.
pub fn auc_score(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid("AUC needs at least one positive and one negative score"));
    }
    if pos.iter().chain(neg).any(|x| x.is_nan()) {
        return Err(Error::Numerical("AUC input contains NaN".into()));
    }
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // average 1-based ranks over tie groups
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < all.len() {
        let mut end = k;
        while end + 1 < all.len() && all[end + 1].0 == all[k].0 {
            end += 1;
        }
        let avg = (k + end) as f64 / 2.0 + 1.0;
        rank_sum += avg * all[k..=end].iter().filter(|x| x.1).count() as f64;
        k = end + 1;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// `z_u · z_v` for each edge.
pub fn edge_scores(z: &Matrix, edges: &[(NodeId, NodeId)]) -> Result<Vec<f64>> {
    if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u.max(v) >= z.rows()) {
        return Err(Error::invalid(format!(
            "edge ({u}, {v}) has an endpoint without an embedding ({} rows)",
            z.rows()
        )));
    }
    Ok(edges.par_iter().map(|&(u, v)| dot(z.row(u), z.row(v))).collect())
}

/// Run metadata attached to reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub ratio: f64,
    pub seed: u64,
    pub mode: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkEvalReport {
    pub aucs: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub meta: ReportMeta,
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl LinkEvalReport {
    pub fn from_aucs(aucs: Vec<f64>, meta: ReportMeta) -> Self {
        let (mean, std) = mean_std(&aucs);
        LinkEvalReport { aucs, mean, std, meta }
    }

    /// One `key=value` line per repetition followed by a summary block.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, a) in self.aucs.iter().enumerate() {
            s.push_str(&format!(
                "link rep={k} mode={} ratio={} seed={} auc={a:.6}\n",
                self.meta.mode, self.meta.ratio, self.meta.seed
            ));
        }
        s.push_str(&format!(
            "# summary\nmode: {}\nratio: {}\nrepetitions: {}\nauc_mean: {:.6}\nauc_std: {:.6}\n",
            self.meta.mode,
            self.meta.ratio,
            self.aucs.len(),
            self.mean,
            self.std
        ));
        s
    }
}

/// Scores test edges against freshly drawn fake edges `repetitions` times.
pub fn link_prediction_eval(
    z: &Matrix,
    test: &[(NodeId, NodeId)],
    graph: &TextualGraph,
    repetitions: usize,
    meta: ReportMeta,
) -> Result<LinkEvalReport> {
    let candidates: Vec<NodeId> = (0..graph.node_count()).collect();
    link_prediction_eval_among(z, test, &candidates, &graph.edge_set(), repetitions, meta)
}

/// [`link_prediction_eval`] with an explicit candidate set and edge set.
pub fn link_prediction_eval_among(
    z: &Matrix,
    test: &[(NodeId, NodeId)],
    candidates: &[NodeId],
    known: &HashSet<(NodeId, NodeId)>,
    repetitions: usize,
    meta: ReportMeta,
) -> Result<LinkEvalReport> {
    if test.is_empty() {
        return Err(Error::invalid("no test edges to evaluate"));
    }
    if repetitions == 0 {
        return Err(Error::invalid("repetitions must be positive"));
    }
    let pos = edge_scores(z, test)?;
    let mut aucs = Vec::with_capacity(repetitions);
    for rep in 0..repetitions {
        let mut rng = RngStream::derive(meta.seed, Substream::Eval, rep as u64);
        let fakes = gen_fake_edges_among(test, candidates, known, &mut rng)?;
        aucs.push(auc_score(&pos, &edge_scores(z, &fakes)?)?);
    }
    Ok(LinkEvalReport::from_aucs(aucs, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc_score(&[2.0, 3.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc_score(&[1.0, 1.0], &[1.0, 1.0, 1.0]).unwrap(), 0.5);
        assert_eq!(auc_score(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 0.5);
        assert_eq!(auc_score(&[0.0], &[1.0]).unwrap(), 0.0);
        assert!(auc_score(&[], &[1.0]).is_err());
        assert!(auc_score(&[1.0], &[]).is_err());
    }

    #[test]
    fn fakes_avoid_real_edges() {
        let edges: Vec<_> = (0..10).map(|i| (i, (i + 1) % 10)).collect();
        let g = TextualGraph::new(10, edges.clone(), vec![vec![]; 10]).unwrap();
        let mut rng = RngStream::new(1, Substream::Eval);
        let f = gen_fake_edges(&edges, &g, &mut rng).unwrap();
        assert_eq!(f.len(), edges.len());
        let known = g.edge_set();
        for &(u, v) in &f {
            assert_ne!(u, v);
            assert!(!known.contains(&undirected(u, v)));
        }
        let mut rng2 = RngStream::new(1, Substream::Eval);
        assert_eq!(f, gen_fake_edges(&edges, &g, &mut rng2).unwrap());
    }

    #[test]
    fn complete_graph_has_no_fakes() {
        let edges = vec![(0, 1), (0, 2), (1, 2)];
        let g = TextualGraph::new(3, edges.clone(), vec![vec![]; 3]).unwrap();
        let mut rng = RngStream::new(1, Substream::Eval);
        assert!(gen_fake_edges(&edges, &g, &mut rng).is_err());
    }

    #[test]
    fn single_repetition_is_one_auc() {
        let edges: Vec<_> = (0..8).map(|i| (i, (i + 1) % 8)).collect();
        let g = TextualGraph::new(8, edges.clone(), vec![vec![]; 8]).unwrap();
        let mut z = Matrix::zeros(8, 2);
        for i in 0..8 {
            let a = i as f64 * 0.7;
            z.set(i, 0, a.cos());
            z.set(i, 1, a.sin());
        }
        let meta = ReportMeta {
            ratio: 50.0,
            seed: 9,
            mode: "ACNE".into(),
        };
        let r = link_prediction_eval(&z, &edges, &g, 1, meta).unwrap();
        let mut rng = RngStream::derive(9, Substream::Eval, 0);
        let fakes = gen_fake_edges(&edges, &g, &mut rng).unwrap();
        let want = auc_score(&edge_scores(&z, &edges).unwrap(), &edge_scores(&z, &fakes).unwrap()).unwrap();
        assert_eq!(r.aucs, vec![want]);
        assert_eq!(r.mean, want);
        assert!(r.to_text().contains("auc_mean"));
    }

    #[test]
    fn missing_embedding_row() {
        let z = Matrix::zeros(2, 2);
        assert!(edge_scores(&z, &[(0, 5)]).is_err());
    }
}
