use rayon::prelude::*;

use super::config::JointWeights;
use crate::adversarial::{PairScorer, RowGrad};
use crate::attention::WordGrad;
use crate::corpus::NodeId;
use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, log_sigmoid, sigmoid, Matrix};

/// Loss value and gradients of one joint-loss batch.
#[derive(Clone, Debug)]
pub struct JointStep {
    pub loss: f64,
    pub structure_grad: Matrix,
    pub word_grad: Matrix,
}

/// Per-term log-likelihoods of one (source, candidate) pair.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct JointTerms {
    pub ss: f64,
    pub tt: f64,
    pub st: f64,
    pub ts: f64,
}

impl JointTerms {
    fn weighted(&self, w: &JointWeights) -> f64 {
        w.ss * self.ss + w.tt * self.tt + w.st * self.st + w.ts * self.ts
    }
}

/// Contribution of pair `(i, c)` as a true (`real`) or sampled pair:
/// returns its log-likelihood terms and adds `∂(−Σ α·ℓ)` into the sparse grads.
fn pair_terms(
    i: NodeId,
    c: NodeId,
    real: bool,
    scorer: &PairScorer,
    w: &JointWeights,
    sg: &mut RowGrad,
    wg: &mut WordGrad,
) -> Result<JointTerms> {
    let sign = if real { 1.0 } else { -1.0 };
    let zs_i = scorer.structure.row(i);
    let zs_c = scorer.structure.row(c);
    let d = zs_i.len();
    let mut terms = JointTerms::default();
    // dL/dx for L = −α·log σ(sign·x)
    let coeff = |alpha: f64, x: f64| -alpha * sign * (1.0 - sigmoid(sign * x));
    let mut gzs_i = vec![0.0; d];
    let mut gzs_c = vec![0.0; d];
    if w.ss != 0.0 {
        let x = dot(zs_i, zs_c);
        terms.ss = log_sigmoid(sign * x);
        let k = coeff(w.ss, x);
        axpy(k, zs_c, &mut gzs_i);
        axpy(k, zs_i, &mut gzs_c);
    }
    if w.tt != 0.0 || w.st != 0.0 || w.ts != 0.0 {
        let p = scorer.forward(i, c)?;
        let mut g_ic = vec![0.0; d];
        let mut g_ci = vec![0.0; d];
        if w.tt != 0.0 {
            let x = dot(&p.zt_ij, &p.zt_ji);
            terms.tt = log_sigmoid(sign * x);
            let k = coeff(w.tt, x);
            axpy(k, &p.zt_ji, &mut g_ic);
            axpy(k, &p.zt_ij, &mut g_ci);
        }
        if w.st != 0.0 {
            let x = dot(zs_i, &p.zt_ji);
            terms.st = log_sigmoid(sign * x);
            let k = coeff(w.st, x);
            axpy(k, &p.zt_ji, &mut gzs_i);
            axpy(k, zs_i, &mut g_ci);
        }
        if w.ts != 0.0 {
            let x = dot(&p.zt_ij, zs_c);
            terms.ts = log_sigmoid(sign * x);
            let k = coeff(w.ts, x);
            axpy(k, zs_c, &mut g_ic);
            axpy(k, &p.zt_ij, &mut gzs_c);
        }
        wg.extend(p.backward(&g_ic, &g_ci));
    }
    sg.rows.push((i, gzs_i));
    sg.rows.push((c, gzs_c));
    Ok(terms)
}

/// Joint skip-gram loss over structure/text embedding pairs,
/// `−Σ_e Σ_{xy} α_xy ℓ_xy`, where each `ℓ_xy` scores the true pair against
/// the edge's sampled negatives.
pub fn joint_loss_step(
    edges: &[(NodeId, NodeId)],
    negatives: &[Vec<NodeId>],
    scorer: &PairScorer,
    weights: &JointWeights,
) -> Result<JointStep> {
    if edges.len() != negatives.len() {
        return Err(Error::shape(
            format!("{} edges", edges.len()),
            format!("{} negative lists", negatives.len()),
        ));
    }
    let parts: Vec<Result<(f64, RowGrad, WordGrad)>> = edges
        .par_iter()
        .zip(negatives.par_iter())
        .map(|(&(i, j), negs)| {
            let mut sg = RowGrad::default();
            let mut wg = WordGrad::default();
            let mut ll = pair_terms(i, j, true, scorer, weights, &mut sg, &mut wg)?.weighted(weights);
            for &k in negs {
                ll += pair_terms(i, k, false, scorer, weights, &mut sg, &mut wg)?.weighted(weights);
            }
            Ok((-ll, sg, wg))
        })
        .collect();
    let mut step = JointStep {
        loss: 0.0,
        structure_grad: Matrix::zeros(scorer.structure.rows(), scorer.structure.cols()),
        word_grad: Matrix::zeros(scorer.words.rows(), scorer.words.cols()),
    };
    for part in parts {
        let (l, sg, wg) = part?;
        step.loss += l;
        sg.accumulate_into(&mut step.structure_grad);
        wg.accumulate_into(&mut step.word_grad);
    }
    if !step.loss.is_finite() {
        return Err(Error::Numerical(format!("joint loss is {}", step.loss)));
    }
    Ok(step)
}

/// Unweighted log-likelihood terms of one edge with its negatives.
pub fn joint_terms(i: NodeId, j: NodeId, negatives: &[NodeId], scorer: &PairScorer) -> Result<JointTerms> {
    let all = JointWeights {
        ss: 1.0,
        tt: 1.0,
        st: 1.0,
        ts: 1.0,
    };
    let (mut sg, mut wg) = (RowGrad::default(), WordGrad::default());
    let mut t = pair_terms(i, j, true, scorer, &all, &mut sg, &mut wg)?;
    for &k in negatives {
        let n = pair_terms(i, k, false, scorer, &all, &mut sg, &mut wg)?;
        t.ss += n.ss;
        t.tt += n.tt;
        t.st += n.st;
        t.ts += n.ts;
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversarial::ModelParams;
    use crate::attention::AttentionConfig;
    use crate::corpus::TokenId;
    use crate::numerics::{finite_diff_check, RngStream, Substream};

    fn setup(seed: u64) -> (ModelParams, Vec<Vec<TokenId>>) {
        let mut rng = RngStream::derive(seed, Substream::Init, 3);
        let mut p = ModelParams::init(5, 6, 3, &mut rng).unwrap();
        for x in p.structure.as_mut_slice() {
            *x = rng.uniform() * 2.0 - 1.0;
        }
        for r in 1..6 {
            for x in p.words.row_mut(r) {
                *x = rng.uniform() * 2.0 - 1.0;
            }
        }
        let texts = (0..5)
            .map(|_| (0..1 + rng.below(4)).map(|_| 1 + rng.below(5) as TokenId).collect())
            .collect();
        (p, texts)
    }

    #[test]
    fn zero_weights_zero_everything() {
        let (p, texts) = setup(0);
        let scorer = PairScorer::new(&p, &texts, AttentionConfig::default());
        let w = JointWeights {
            ss: 0.0,
            tt: 0.0,
            st: 0.0,
            ts: 0.0,
        };
        let s = joint_loss_step(&[(0, 1)], &[vec![2]], &scorer, &w).unwrap();
        assert_eq!(s.loss, 0.0);
        assert!(s.structure_grad.as_slice().iter().all(|&x| x == 0.0));
        assert!(s.word_grad.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_embeddings_structure_term() {
        let (mut p, texts) = setup(1);
        p.structure.fill(0.0);
        let scorer = PairScorer::new(&p, &texts, AttentionConfig::default());
        let w = JointWeights {
            ss: 1.0,
            tt: 0.0,
            st: 0.0,
            ts: 0.0,
        };
        let s = joint_loss_step(&[(0, 1)], &[vec![3]], &scorer, &w).unwrap();
        assert!((s.loss - 2.0 * 2f64.ln()).abs() < 1e-15);
        let t = joint_terms(0, 1, &[3], &scorer).unwrap();
        assert!((t.ss + 2.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            let (p, texts) = setup(seed);
            let mut rng = RngStream::derive(seed, Substream::Negatives, 0);
            let attn = AttentionConfig::new(rng.uniform(), rng.uniform(), rng.uniform()).unwrap();
            let w = JointWeights {
                ss: rng.uniform(),
                tt: rng.uniform(),
                st: rng.uniform(),
                ts: rng.uniform(),
            };
            let edges = [(0, 1), (3, 2)];
            let negs = vec![vec![rng.below(5)], vec![rng.below(5), rng.below(5)]];
            let scorer = PairScorer::new(&p, &texts, attn);
            let step = joint_loss_step(&edges, &negs, &scorer, &w).unwrap();
            let (wr, wc) = p.words.shape();
            let fw = |x: &[f64]| {
                let words = Matrix::from_vec(wr, wc, x.to_vec()).unwrap();
                let s = PairScorer {
                    words: &words,
                    ..scorer
                };
                joint_loss_step(&edges, &negs, &s, &w).unwrap().loss
            };
            let r = finite_diff_check(fw, p.words.as_slice(), step.word_grad.as_slice(), 1e-5, 1e-4);
            assert!(r.passed, "words seed {seed}: {}", r.max_rel_error);
            // structure rows also steer the topological attention queries;
            // those are held fixed, so differentiate with the queries frozen
            let (sr, sc) = p.structure.shape();
            let fs = |x: &[f64]| {
                let z = Matrix::from_vec(sr, sc, x.to_vec()).unwrap();
                let moved = PairScorer {
                    structure: &z,
                    ..scorer
                };
                joint_loss_frozen_queries(&edges, &negs, &moved, &scorer, &w)
            };
            let r = finite_diff_check(fs, p.structure.as_slice(), step.structure_grad.as_slice(), 1e-5, 1e-4);
            assert!(r.passed, "structure seed {seed}: {}", r.max_rel_error);
        }
    }

    /// Joint loss where the text embeddings are computed with the structure
    /// table of `text_scorer` while the dot products use `zs_scorer`'s table.
    fn joint_loss_frozen_queries(
        edges: &[(NodeId, NodeId)],
        negs: &[Vec<NodeId>],
        zs_scorer: &PairScorer,
        text_scorer: &PairScorer,
        w: &JointWeights,
    ) -> f64 {
        let mut total = 0.0;
        for (&(i, j), ns) in edges.iter().zip(negs) {
            let cands = std::iter::once((j, 1.0)).chain(ns.iter().map(|&k| (k, -1.0)));
            for (c, s) in cands {
                let zi = zs_scorer.structure.row(i);
                let zc = zs_scorer.structure.row(c);
                let pr = text_scorer.forward(i, c).unwrap();
                total -= w.ss * log_sigmoid(s * dot(zi, zc));
                total -= w.tt * log_sigmoid(s * dot(&pr.zt_ij, &pr.zt_ji));
                total -= w.st * log_sigmoid(s * dot(zi, &pr.zt_ji));
                total -= w.ts * log_sigmoid(s * dot(&pr.zt_ij, zc));
            }
        }
        total
    }
}
