//! Discriminator and generator of the adversarial game.
//!
//! The discriminator scores a node pair by `σ(z^t_{i|j} · z^t_{j|i})` and
//! owns the word embeddings. The generator is a softmax over structure
//! embedding similarities; its log-likelihood is approximated by negative
//! sampling and it is updated by policy gradients with reward
//! `log(1 − D)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionConfig, ContextPair};
use crate::corpus::{NodeId, PaddedText, TokenId, PAD_ID};
use crate::error::{Error, Result};
use crate::numerics::{
    axpy, categorical_sample, dot, log_sigmoid, masked_softmax, sigmoid, AdamState, DegreeSampler, Matrix,
    RngStream,
};

/// Trainable tables and their optimizer state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// `|V|×d` structure embeddings (generator parameters).
    pub structure: Matrix,
    /// `|Vocab|×d` word embeddings (discriminator parameters); row 0 is padding.
    pub words: Matrix,
    pub structure_adam: AdamState,
    pub words_adam: AdamState,
}

impl ModelParams {
    /// Uniform `(−0.5/d, 0.5/d)` initialization with a zero pad row.
    pub fn init(nodes: usize, vocab: usize, dim: usize, rng: &mut RngStream) -> Result<Self> {
        if nodes == 0 || vocab == 0 || dim == 0 {
            return Err(Error::invalid(format!(
                "cannot build parameters for {nodes} nodes, {vocab} tokens, dim {dim}"
            )));
        }
        let half = 0.5 / dim as f64;
        let mut draw = |rows: usize| {
            let data = (0..rows * dim).map(|_| (rng.uniform() * 2.0 - 1.0) * half).collect();
            Matrix::from_vec(rows, dim, data).expect("sized")
        };
        let structure = draw(nodes);
        let mut words = draw(vocab);
        words.row_mut(PAD_ID as usize).fill(0.0);
        Ok(ModelParams {
            structure_adam: AdamState::for_matrix(&structure),
            words_adam: AdamState::for_matrix(&words),
            structure,
            words,
        })
    }

    pub fn dim(&self) -> usize {
        self.structure.cols()
    }

    pub fn step_words(&mut self, grad: &Matrix, lr: f64) -> Result<()> {
        self.words_adam.step_matrix(&mut self.words, grad, lr)?;
        self.words.row_mut(PAD_ID as usize).fill(0.0);
        self.words.check_finite("word embeddings")
    }

    pub fn step_structure(&mut self, grad: &Matrix, lr: f64) -> Result<()> {
        self.structure_adam.step_matrix(&mut self.structure, grad, lr)?;
        self.structure.check_finite("structure embeddings")
    }

    pub fn check(&self, nodes: usize, vocab: usize) -> Result<()> {
        if self.structure.rows() != nodes || self.words.rows() != vocab || self.words.cols() != self.dim() {
            return Err(Error::shape(
                format!("structure {} / words {}", self.structure.shape_str(), self.words.shape_str()),
                format!("{nodes} nodes / {vocab} tokens"),
            ));
        }
        if self.words.row(PAD_ID as usize).iter().any(|&x| x != 0.0) {
            return Err(Error::invalid("pad row of the word embeddings is not zero"));
        }
        Ok(())
    }
}

/// Loss weights and negative count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvConfig {
    /// Negatives per positive (`K`).
    pub negatives: usize,
    /// Weight of true edges in the discriminator loss.
    pub alpha1: f64,
    /// Weight of generated edges in the discriminator loss.
    pub alpha2: f64,
    /// Weight of the policy-gradient term in the generator loss.
    pub alpha3: f64,
    /// Weight of the supervised term in the generator loss.
    pub eta: f64,
}

impl Default for AdvConfig {
    fn default() -> Self {
        AdvConfig {
            negatives: 1,
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 1.0,
            eta: 0.0,
        }
    }
}

impl AdvConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
            ("eta", self.eta),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Real token ids of each node's padded text.
pub fn real_token_ids(texts: &[PaddedText]) -> Vec<Vec<TokenId>> {
    texts
        .iter()
        .map(|t| t.ids.iter().zip(&t.mask).filter(|(_, &m)| m).map(|(&id, _)| id).collect())
        .collect()
}

/// Everything needed to run the attention pipeline on a node pair.
#[derive(Clone, Copy)]
pub struct PairScorer<'a> {
    pub words: &'a Matrix,
    pub structure: &'a Matrix,
    pub texts: &'a [Vec<TokenId>],
    pub attention: AttentionConfig,
}

impl<'a> PairScorer<'a> {
    pub fn new(params: &'a ModelParams, texts: &'a [Vec<TokenId>], attention: AttentionConfig) -> Self {
        PairScorer {
            words: &params.words,
            structure: &params.structure,
            texts,
            attention,
        }
    }

    pub fn forward(&self, i: NodeId, j: NodeId) -> Result<ContextPair> {
        ContextPair::forward(
            self.words,
            &self.texts[i],
            &self.texts[j],
            self.structure.row(i),
            self.structure.row(j),
            self.attention,
        )
    }

    /// `z^t_{i|j} · z^t_{j|i}`
    pub fn logit(&self, i: NodeId, j: NodeId) -> Result<f64> {
        let p = self.forward(i, j)?;
        Ok(dot(&p.zt_ij, &p.zt_ji))
    }

    pub fn disc_prob(&self, i: NodeId, j: NodeId) -> Result<f64> {
        Ok(sigmoid(self.logit(i, j)?))
    }
}

/// Probability that an edge is real given both context-aware text embeddings.
pub fn disc_prob(zt_i: &[f64], zt_j: &[f64]) -> f64 {
    sigmoid(dot(zt_i, zt_j))
}

/// Discriminator loss `−[α1 Σ log D(pos) + α2 Σ log(1 − D(neg))]` and its
/// dense gradient on the word embeddings.
pub fn disc_loss_and_grad(
    pos: &[(NodeId, NodeId)],
    neg: &[(NodeId, NodeId)],
    scorer: &PairScorer,
    cfg: &AdvConfig,
) -> Result<(f64, Matrix)> {
    if pos.is_empty() {
        return Err(Error::invalid("discriminator step needs at least one positive pair"));
    }
    let mut items: Vec<(NodeId, NodeId, bool)> = Vec::new();
    if cfg.alpha1 != 0.0 {
        items.extend(pos.iter().map(|&(i, j)| (i, j, true)));
    }
    if cfg.alpha2 != 0.0 {
        items.extend(neg.iter().map(|&(i, j)| (i, j, false)));
    }
    let parts: Vec<Result<(f64, crate::attention::WordGrad)>> = items
        .par_iter()
        .map(|&(i, j, real)| {
            let p = scorer.forward(i, j)?;
            let x = dot(&p.zt_ij, &p.zt_ji);
            let (loss, dx) = if real {
                (-cfg.alpha1 * log_sigmoid(x), -cfg.alpha1 * (1.0 - sigmoid(x)))
            } else {
                (-cfg.alpha2 * log_sigmoid(-x), cfg.alpha2 * sigmoid(x))
            };
            let g_ij: Vec<f64> = p.zt_ji.iter().map(|v| dx * v).collect();
            let g_ji: Vec<f64> = p.zt_ij.iter().map(|v| dx * v).collect();
            Ok((loss, p.backward(&g_ij, &g_ji)))
        })
        .collect();
    let mut grad = Matrix::zeros(scorer.words.rows(), scorer.words.cols());
    let mut loss = 0.0;
    for part in parts {
        let (l, g) = part?;
        loss += l;
        g.accumulate_into(&mut grad);
    }
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("discriminator loss is {loss}")));
    }
    Ok((loss, grad))
}

/// Generator logits `z_i · z_j` for every node.
pub fn gen_logits(i: NodeId, structure: &Matrix) -> Vec<f64> {
    let zi = structure.row(i);
    (0..structure.rows()).map(|j| dot(zi, structure.row(j))).collect()
}

/// `G(·|v_i)` restricted to the nodes flagged in `support` (and never `i`).
pub fn gen_prob_over(i: NodeId, structure: &Matrix, support: Option<&[bool]>) -> Result<Vec<f64>> {
    let n = structure.rows();
    if n < 2 {
        return Err(Error::invalid("generator needs at least two nodes"));
    }
    let mut mask: Vec<bool> = match support {
        Some(s) if s.len() == n => s.to_vec(),
        Some(s) => return Err(Error::shape(format!("support[{}]", s.len()), format!("{n} nodes"))),
        None => vec![true; n],
    };
    mask[i] = false;
    masked_softmax(&gen_logits(i, structure), &mask)
}

/// Full generator distribution over all nodes except `i`.
pub fn gen_prob(i: NodeId, structure: &Matrix) -> Result<Vec<f64>> {
    gen_prob_over(i, structure, None)
}

pub fn gen_sample(i: NodeId, structure: &Matrix, support: Option<&[bool]>, rng: &mut RngStream) -> Result<NodeId> {
    categorical_sample(&gen_prob_over(i, structure, support)?, rng)
}

/// Sparse gradient on structure-embedding rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RowGrad {
    pub rows: Vec<(NodeId, Vec<f64>)>,
}

impl RowGrad {
    fn add(&mut self, node: NodeId, alpha: f64, v: &[f64]) {
        self.rows.push((node, v.iter().map(|x| alpha * x).collect()));
    }

    pub fn scale(&mut self, alpha: f64) {
        for (_, r) in &mut self.rows {
            r.iter_mut().for_each(|x| *x *= alpha);
        }
    }

    pub fn accumulate_into(&self, dense: &mut Matrix) {
        for (node, r) in &self.rows {
            axpy(1.0, r, dense.row_mut(*node));
        }
    }

    pub fn to_dense(&self, rows: usize, cols: usize) -> Matrix {
        let mut m = Matrix::zeros(rows, cols);
        self.accumulate_into(&mut m);
        m
    }
}

pub fn sample_negatives(sampler: &DegreeSampler, k: usize, rng: &mut RngStream) -> Vec<NodeId> {
    (0..k).map(|_| sampler.sample(rng)).collect()
}

/// Negative-sampling estimate of `log G(v_j|v_i)` with a fixed negative set,
/// and its gradient on the touched structure rows.
pub fn log_gen_ns_with(i: NodeId, j: NodeId, structure: &Matrix, negatives: &[NodeId]) -> (f64, RowGrad) {
    let zi = structure.row(i);
    let zj = structure.row(j);
    let mut grad = RowGrad::default();
    let x = dot(zj, zi);
    let mut value = log_sigmoid(x);
    let mut gi: Vec<f64> = zj.iter().map(|v| (1.0 - sigmoid(x)) * v).collect();
    grad.add(j, 1.0 - sigmoid(x), zi);
    for &k in negatives {
        let zk = structure.row(k);
        let xk = dot(zk, zi);
        value += log_sigmoid(-xk);
        let s = sigmoid(xk);
        axpy(-s, zk, &mut gi);
        grad.add(k, -s, zi);
    }
    grad.rows.push((i, gi));
    (value, grad)
}

/// [`log_gen_ns_with`] drawing `k` negatives proportional to `degree^{3/4}`.
pub fn log_gen_ns(
    i: NodeId,
    j: NodeId,
    structure: &Matrix,
    k: usize,
    sampler: &DegreeSampler,
    rng: &mut RngStream,
) -> (f64, RowGrad) {
    let negs = sample_negatives(sampler, k, rng);
    log_gen_ns_with(i, j, structure, &negs)
}

/// Exact `log G(v_j|v_i)` under the full softmax and its gradient.
pub fn log_gen_exact(i: NodeId, j: NodeId, structure: &Matrix, support: Option<&[bool]>) -> Result<(f64, RowGrad)> {
    let p = gen_prob_over(i, structure, support)?;
    if p[j] == 0.0 {
        return Err(Error::invalid(format!("node {j} is outside the generator support of {i}")));
    }
    let zi = structure.row(i);
    let mut grad = RowGrad::default();
    let mut gi = structure.row(j).to_vec();
    for (k, &pk) in p.iter().enumerate() {
        if pk == 0.0 {
            continue;
        }
        axpy(-pk, structure.row(k), &mut gi);
        let coeff = if k == j { 1.0 - pk } else { -pk };
        grad.add(k, coeff, zi);
    }
    grad.rows.push((i, gi));
    Ok((p[j].ln(), grad))
}

/// Inputs of a generator step that stay fixed while it runs.
pub struct GenContext<'a> {
    /// Degree^{3/4} table from the training edges.
    pub sampler: &'a DegreeSampler,
    /// Training neighbors per node.
    pub neighbors: &'a [Vec<NodeId>],
    /// Nodes the generator may propose; `None` means all.
    pub support: Option<&'a [bool]>,
}

/// Summary of one generator step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenStepStats {
    /// Mean `log(1 − D)` over sampled pairs.
    pub mean_reward: f64,
    /// Value of the minimized surrogate `α3·r·log G(sampled) − η·log G(true)`.
    pub surrogate: f64,
}

struct GenDraw {
    i: NodeId,
    j: NodeId,
    j_negs: Vec<NodeId>,
    truth: Option<(NodeId, Vec<NodeId>)>,
}

/// Policy-gradient step of the generator on `nodes`, returning the gradient
/// of `Σ_i α3·r_i·log G(v_j|v_i) − η·log G(v_t|v_i)` on the structure table,
/// where `v_j ∼ G`, `r_i = log(1 − D(v_i, v_j))` is held constant and `v_t`
/// is a uniformly drawn training neighbor.
pub fn gen_policy_grad(
    nodes: &[NodeId],
    scorer: &PairScorer,
    ctx: &GenContext,
    cfg: &AdvConfig,
    rng: &mut RngStream,
) -> Result<(Matrix, GenStepStats)> {
    let structure = scorer.structure;
    let mut grad = Matrix::zeros(structure.rows(), structure.cols());
    if nodes.is_empty() || (cfg.alpha3 == 0.0 && cfg.eta == 0.0) {
        return Ok((grad, GenStepStats::default()));
    }
    // all random draws happen here, in order, before the parallel section
    let mut draws = Vec::with_capacity(nodes.len());
    for &i in nodes {
        let j = gen_sample(i, structure, ctx.support, rng)?;
        let j_negs = sample_negatives(ctx.sampler, cfg.negatives, rng);
        let truth = if cfg.eta != 0.0 && !ctx.neighbors[i].is_empty() {
            let t = ctx.neighbors[i][rng.below(ctx.neighbors[i].len())];
            Some((t, sample_negatives(ctx.sampler, cfg.negatives, rng)))
        } else {
            None
        };
        draws.push(GenDraw { i, j, j_negs, truth });
    }
    let parts: Vec<Result<(f64, f64, RowGrad)>> = draws
        .par_iter()
        .map(|d| {
            let mut rg = RowGrad::default();
            let mut surrogate = 0.0;
            let reward = log_sigmoid(-scorer.logit(d.i, d.j)?);
            if cfg.alpha3 != 0.0 {
                let (v, mut g) = log_gen_ns_with(d.i, d.j, structure, &d.j_negs);
                g.scale(cfg.alpha3 * reward);
                surrogate += cfg.alpha3 * reward * v;
                rg.rows.extend(g.rows);
            }
            if let Some((t, negs)) = &d.truth {
                let (v, mut g) = log_gen_ns_with(d.i, *t, structure, negs);
                g.scale(-cfg.eta);
                surrogate -= cfg.eta * v;
                rg.rows.extend(g.rows);
            }
            Ok((reward, surrogate, rg))
        })
        .collect();
    let mut stats = GenStepStats::default();
    for part in parts {
        let (r, s, g) = part?;
        stats.mean_reward += r;
        stats.surrogate += s;
        g.accumulate_into(&mut grad);
    }
    stats.mean_reward /= nodes.len() as f64;
    if !stats.surrogate.is_finite() {
        return Err(Error::Numerical(format!("generator surrogate is {}", stats.surrogate)));
    }
    Ok((grad, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_check, Substream};

    fn rand_matrix(rng: &mut RngStream, rows: usize, cols: usize, scale: f64) -> Matrix {
        let data = (0..rows * cols).map(|_| (rng.uniform() * 2.0 - 1.0) * scale).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn disc_prob_values() {
        assert_eq!(disc_prob(&[0.0, 0.0], &[0.0, 0.0]), 0.5);
        assert!((disc_prob(&[3f64.ln()], &[1.0]) - 0.75).abs() < 1e-15);
        let mut rng = RngStream::new(3, Substream::Init);
        let a: Vec<f64> = (0..4).map(|_| rng.uniform() - 0.5).collect();
        let b: Vec<f64> = (0..4).map(|_| rng.uniform() - 0.5).collect();
        let s: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((disc_prob(&a, &b) - 1.0 / (1.0 + (-s).exp())).abs() < 1e-12);
    }

    #[test]
    fn gen_prob_examples() {
        let z = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let p = gen_prob(0, &z).unwrap();
        // logits 0 and 1 for nodes 1 and 2
        let e = 1f64.exp();
        assert_eq!(p[0], 0.0);
        assert!((p[1] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((p[2] - e / (1.0 + e)).abs() < 1e-15);

        let same = Matrix::from_rows(&vec![vec![0.3, -0.2]; 5]).unwrap();
        for (k, &pk) in gen_prob(2, &same).unwrap().iter().enumerate() {
            assert!((pk - if k == 2 { 0.0 } else { 0.25 }).abs() < 1e-15);
        }
        assert!(gen_prob(0, &Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn gen_sample_dominant_logit() {
        let mut z = Matrix::zeros(4, 1);
        z.set(0, 0, 1.0);
        z.set(3, 0, 50.0);
        let mut rng = RngStream::new(1, Substream::Generator);
        let hits = (0..10_000).filter(|_| gen_sample(0, &z, None, &mut rng).unwrap() == 3).count();
        assert!(hits as f64 / 1e4 > 0.999);
        let mut z = Matrix::zeros(3, 1);
        z.set(1, 0, 5.0);
        for _ in 0..200 {
            assert_ne!(gen_sample(1, &z, None, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn log_gen_ns_trivial_cases() {
        let z = Matrix::zeros(3, 2);
        let (v, _) = log_gen_ns_with(0, 1, &z, &[2]);
        assert!((v + 2.0 * 2f64.ln()).abs() < 1e-15);
        let mut rng = RngStream::new(1, Substream::Init);
        let z = rand_matrix(&mut rng, 3, 2, 1.0);
        let (v, _) = log_gen_ns_with(0, 1, &z, &[]);
        assert_eq!(v, log_sigmoid(dot(z.row(0), z.row(1))));
    }

    #[test]
    fn log_gen_ns_gradients() {
        for seed in 0..20 {
            let mut rng = RngStream::derive(seed, Substream::Init, 0);
            let (n, d) = (6, 3);
            let z = rand_matrix(&mut rng, n, d, 1.0);
            let i = rng.below(n);
            let j = (i + 1 + rng.below(n - 1)) % n;
            let negs: Vec<NodeId> = (0..3).map(|_| rng.below(n)).collect();
            let (_, g) = log_gen_ns_with(i, j, &z, &negs);
            let dense = g.to_dense(n, d);
            let f = |p: &[f64]| log_gen_ns_with(i, j, &Matrix::from_vec(n, d, p.to_vec()).unwrap(), &negs).0;
            let r = finite_diff_check(f, z.as_slice(), dense.as_slice(), 1e-5, 1e-4);
            assert!(r.passed, "seed {seed}: {}", r.max_rel_error);
        }
    }

    #[test]
    fn log_gen_exact_gradients() {
        for seed in 0..20 {
            let mut rng = RngStream::derive(seed, Substream::Init, 1);
            let (n, d) = (5, 3);
            let z = rand_matrix(&mut rng, n, d, 1.0);
            let (i, j) = (rng.below(n), 0);
            let j = if i == j { 1 } else { j };
            let (v, g) = log_gen_exact(i, j, &z, None).unwrap();
            assert!((v - gen_prob(i, &z).unwrap()[j].ln()).abs() < 1e-14);
            let dense = g.to_dense(n, d);
            let f = |p: &[f64]| log_gen_exact(i, j, &Matrix::from_vec(n, d, p.to_vec()).unwrap(), None).unwrap().0;
            let r = finite_diff_check(f, z.as_slice(), dense.as_slice(), 1e-5, 1e-4);
            assert!(r.passed, "seed {seed}: {}", r.max_rel_error);
        }
    }

    fn toy_setup(seed: u64) -> (ModelParams, Vec<Vec<TokenId>>, Vec<Vec<NodeId>>, DegreeSampler) {
        let mut rng = RngStream::derive(seed, Substream::Init, 7);
        let mut params = ModelParams::init(5, 6, 3, &mut rng).unwrap();
        params.structure = rand_matrix(&mut rng, 5, 3, 1.0);
        let mut w = rand_matrix(&mut rng, 6, 3, 1.0);
        w.row_mut(0).fill(0.0);
        params.words = w;
        let texts: Vec<Vec<TokenId>> = (0..5)
            .map(|_| (0..1 + rng.below(4)).map(|_| 1 + rng.below(5) as TokenId).collect())
            .collect();
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)];
        let neighbors = crate::corpus::adjacency(5, &edges);
        let sampler = DegreeSampler::new(&crate::corpus::degrees_of(5, &edges)).unwrap();
        (params, texts, neighbors, sampler)
    }

    #[test]
    fn disc_loss_trivial_weights() {
        let (params, texts, _, _) = toy_setup(0);
        let scorer = PairScorer::new(&params, &texts, AttentionConfig::default());
        let cfg = AdvConfig {
            alpha1: 0.0,
            alpha2: 0.0,
            ..AdvConfig::default()
        };
        let (l, g) = disc_loss_and_grad(&[(0, 1)], &[(0, 2)], &scorer, &cfg).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
        assert!(disc_loss_and_grad(&[], &[(0, 2)], &scorer, &cfg).is_err());

        let mut zero = params.clone();
        zero.words.fill(0.0);
        let scorer = PairScorer::new(&zero, &texts, AttentionConfig::default());
        let cfg = AdvConfig {
            alpha2: 0.0,
            ..AdvConfig::default()
        };
        let (l, _) = disc_loss_and_grad(&[(0, 1)], &[], &scorer, &cfg).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn disc_gradients() {
        for seed in 0..20 {
            let (params, texts, _, _) = toy_setup(seed);
            let mut rng = RngStream::derive(seed, Substream::Init, 9);
            let attn = AttentionConfig::new(rng.uniform(), rng.uniform(), rng.uniform()).unwrap();
            let cfg = AdvConfig {
                alpha1: rng.uniform(),
                alpha2: rng.uniform(),
                ..AdvConfig::default()
            };
            let pos = [(0, 1), (2, 3)];
            let neg = [(0, 3), (4, 2)];
            let scorer = PairScorer::new(&params, &texts, attn);
            let (_, g) = disc_loss_and_grad(&pos, &neg, &scorer, &cfg).unwrap();
            let (r, c) = params.words.shape();
            let f = |p: &[f64]| {
                let w = Matrix::from_vec(r, c, p.to_vec()).unwrap();
                let s = PairScorer {
                    words: &w,
                    ..scorer
                };
                disc_loss_and_grad(&pos, &neg, &s, &cfg).unwrap().0
            };
            let rep = finite_diff_check(f, params.words.as_slice(), g.as_slice(), 1e-5, 1e-4);
            assert!(rep.passed, "seed {seed}: {}", rep.max_rel_error);
        }
    }

    #[test]
    fn policy_grad_zero_weights() {
        let (params, texts, neighbors, sampler) = toy_setup(1);
        let scorer = PairScorer::new(&params, &texts, AttentionConfig::default());
        let ctx = GenContext {
            sampler: &sampler,
            neighbors: &neighbors,
            support: None,
        };
        let cfg = AdvConfig {
            alpha3: 0.0,
            eta: 0.0,
            ..AdvConfig::default()
        };
        let mut rng = RngStream::new(0, Substream::Generator);
        let (g, _) = gen_policy_grad(&[0, 1, 2], &scorer, &ctx, &cfg, &mut rng).unwrap();
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn policy_grad_matches_frozen_reward_surrogate() {
        for seed in 0..20 {
            let (params, texts, neighbors, sampler) = toy_setup(seed);
            let scorer = PairScorer::new(&params, &texts, AttentionConfig::default());
            let ctx = GenContext {
                sampler: &sampler,
                neighbors: &neighbors,
                support: None,
            };
            let cfg = AdvConfig {
                eta: 0.5,
                ..AdvConfig::default()
            };
            let nodes = [0, 3];
            let mut rng = RngStream::derive(seed, Substream::Generator, 0);
            let mut replay = rng.clone();
            let (g, _) = gen_policy_grad(&nodes, &scorer, &ctx, &cfg, &mut rng).unwrap();
            // replay the same draws and rebuild the surrogate with rewards frozen
            let mut terms = Vec::new();
            for &i in &nodes {
                let j = gen_sample(i, &params.structure, None, &mut replay).unwrap();
                let jn = sample_negatives(&sampler, cfg.negatives, &mut replay);
                let t = neighbors[i][replay.below(neighbors[i].len())];
                let tn = sample_negatives(&sampler, cfg.negatives, &mut replay);
                let r = log_sigmoid(-scorer.logit(i, j).unwrap());
                terms.push((i, j, jn, t, tn, r));
            }
            let (rows, cols) = params.structure.shape();
            let f = |p: &[f64]| {
                let z = Matrix::from_vec(rows, cols, p.to_vec()).unwrap();
                terms
                    .iter()
                    .map(|(i, j, jn, t, tn, r)| {
                        cfg.alpha3 * r * log_gen_ns_with(*i, *j, &z, jn).0 - cfg.eta * log_gen_ns_with(*i, *t, &z, tn).0
                    })
                    .sum::<f64>()
            };
            let rep = finite_diff_check(f, params.structure.as_slice(), g.as_slice(), 1e-5, 1e-4);
            assert!(rep.passed, "seed {seed}: {}", rep.max_rel_error);
        }
    }

    #[test]
    fn supervised_term_ascends_true_neighbor() {
        let (mut params, texts, neighbors, sampler) = toy_setup(2);
        let cfg = AdvConfig {
            alpha3: 0.0,
            eta: 1.0,
            negatives: 0,
            ..AdvConfig::default()
        };
        // node 0's neighbors are 1 and 4
        let before: f64 = [1, 4].iter().map(|&t| dot(params.structure.row(0), params.structure.row(t))).sum();
        let mut rng = RngStream::new(5, Substream::Generator);
        for _ in 0..20 {
            let scorer = PairScorer::new(&params, &texts, AttentionConfig::default());
            let ctx = GenContext {
                sampler: &sampler,
                neighbors: &neighbors,
                support: None,
            };
            let (g, _) = gen_policy_grad(&[0], &scorer, &ctx, &cfg, &mut rng).unwrap();
            params.step_structure(&g, 0.05).unwrap();
        }
        let after: f64 = [1, 4].iter().map(|&t| dot(params.structure.row(0), params.structure.row(t))).sum();
        assert!(after > before, "{before} -> {after}");
    }

    #[test]
    fn init_respects_pad_and_range() {
        let mut rng = RngStream::new(0, Substream::Init);
        let p = ModelParams::init(4, 5, 10, &mut rng).unwrap();
        assert!(p.words.row(0).iter().all(|&x| x == 0.0));
        assert!(p.structure.as_slice().iter().all(|x| x.abs() <= 0.05));
        p.check(4, 5).unwrap();
        assert!(p.check(5, 5).is_err());
    }
}
