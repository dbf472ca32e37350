use rayon::prelude::*;

use crate::adversarial::{gen_prob_over, PairScorer};
use crate::corpus::NodeId;
use crate::error::Result;
use crate::numerics::{axpy, categorical_sample, Matrix, RngStream};

/// How the expectation over generator partners is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expectation {
    /// Weighted sum over every partner with non-zero probability.
    Exact,
    /// Average over this many generator samples.
    Sampled(usize),
}

impl Expectation {
    pub fn choose(nodes: usize, exact_threshold: usize, samples: usize) -> Self {
        if nodes <= exact_threshold {
            Expectation::Exact
        } else {
            Expectation::Sampled(samples)
        }
    }
}

/// Final node embeddings `z_i = [z_i^s, E_{j∼G(·|i)} z^t_{i|j}]`, `|V|×2d`.
///
/// The generator runs over `support` (all nodes when `None`).
pub fn aggregate_embeddings(
    scorer: &PairScorer,
    support: Option<&[bool]>,
    how: Expectation,
    rng: &mut RngStream,
) -> Result<Matrix> {
    let structure = scorer.structure;
    let (n, d) = structure.shape();
    // per node: list of (partner, weight)
    let mut plans: Vec<Vec<(NodeId, f64)>> = Vec::with_capacity(n);
    for i in 0..n {
        let p = gen_prob_over(i, structure, support)?;
        let plan = match how {
            Expectation::Exact => p.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(j, &w)| (j, w)).collect(),
            Expectation::Sampled(s) => {
                let w = 1.0 / s as f64;
                let mut draws = Vec::with_capacity(s);
                for _ in 0..s {
                    draws.push((categorical_sample(&p, rng)?, w));
                }
                draws
            }
        };
        plans.push(plan);
    }
    let text_blocks: Vec<Result<Vec<f64>>> = plans
        .par_iter()
        .enumerate()
        .map(|(i, plan)| {
            let mut acc = vec![0.0; d];
            for &(j, w) in plan {
                let pair = scorer.forward(i, j)?;
                axpy(w, &pair.zt_ij, &mut acc);
            }
            Ok(acc)
        })
        .collect();
    let mut out = Matrix::zeros(n, 2 * d);
    for (i, block) in text_blocks.into_iter().enumerate() {
        let block = block?;
        let row = out.row_mut(i);
        row[..d].copy_from_slice(structure.row(i));
        row[d..].copy_from_slice(&block);
    }
    out.check_finite("aggregated embeddings")?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversarial::ModelParams;
    use crate::attention::AttentionConfig;
    use crate::corpus::TokenId;
    use crate::numerics::Substream;

    fn setup() -> (ModelParams, Vec<Vec<TokenId>>) {
        let mut rng = RngStream::new(11, Substream::Init);
        let mut p = ModelParams::init(4, 6, 3, &mut rng).unwrap();
        for x in p.structure.as_mut_slice() {
            *x = rng.uniform() * 2.0 - 1.0;
        }
        for r in 1..6 {
            for x in p.words.row_mut(r) {
                *x = rng.uniform() * 2.0 - 1.0;
            }
        }
        (p, vec![vec![1, 2], vec![3], vec![4, 5, 1], vec![2, 2]])
    }

    #[test]
    fn exact_matches_weighted_sum() {
        let (p, texts) = setup();
        let scorer = PairScorer::new(&p, &texts, AttentionConfig::default());
        let mut rng = RngStream::new(0, Substream::Aggregate);
        let z = aggregate_embeddings(&scorer, None, Expectation::Exact, &mut rng).unwrap();
        for i in 0..4 {
            assert_eq!(&z.row(i)[..3], p.structure.row(i));
            let mut want = [0.0; 3];
            let logits: Vec<f64> = (0..4)
                .map(|j| p.structure.row(i).iter().zip(p.structure.row(j)).map(|(a, b)| a * b).sum())
                .collect();
            let norm: f64 = (0..4).filter(|&j| j != i).map(|j| logits[j].exp()).sum();
            for j in (0..4).filter(|&j| j != i) {
                let w = logits[j].exp() / norm;
                let zt = scorer.forward(i, j).unwrap().zt_ij;
                for c in 0..3 {
                    want[c] += w * zt[c];
                }
            }
            for c in 0..3 {
                assert!((z.get(i, 3 + c) - want[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forced_partner() {
        let (mut p, texts) = setup();
        // node 0 strongly prefers node 2
        p.structure.row_mut(0).copy_from_slice(&[40.0, 0.0, 0.0]);
        p.structure.row_mut(2).copy_from_slice(&[40.0, 0.0, 0.0]);
        p.structure.row_mut(1).copy_from_slice(&[0.0, 1.0, 0.0]);
        p.structure.row_mut(3).copy_from_slice(&[0.0, 0.0, 1.0]);
        let scorer = PairScorer::new(&p, &texts, AttentionConfig::default());
        let mut rng = RngStream::new(0, Substream::Aggregate);
        let z = aggregate_embeddings(&scorer, None, Expectation::Sampled(8), &mut rng).unwrap();
        let zt = scorer.forward(0, 2).unwrap().zt_ij;
        for c in 0..3 {
            assert!((z.get(0, 3 + c) - zt[c]).abs() < 1e-12);
        }
    }
}
