//! Embeddings for nodes that were absent during training.
//!
//! A convolutional mapper learns to predict a node's structure embedding
//! from its text on seen nodes. Unseen nodes start from the mapper's
//! prediction and are refined by policy gradients against the frozen
//! discriminator, with a quadratic pull back toward the prediction.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversarial::{
    gen_sample, log_gen_ns_with, sample_negatives, ModelParams, PairScorer, RowGrad,
};
use crate::attention::AttentionConfig;
use crate::corpus::{NodeId, PaddedText, TokenId};
use crate::error::{Error, Result};
use crate::numerics::{
    axpy, dot, log_sigmoid, read_matrix, relu, write_matrix, AdamState, DegreeSampler, Matrix, RngStream,
    Substream,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InductiveConfig {
    /// Convolution window in tokens.
    pub window: usize,
    pub mapper_epochs: usize,
    pub mapper_batch: usize,
    pub mapper_lr: f64,
    pub posttrain_epochs: usize,
    pub posttrain_batch: usize,
    pub posttrain_lr: f64,
    /// Weight of the pull toward the mapper prediction.
    pub lambda_r: f64,
    /// Weight of the policy-gradient term.
    pub alpha3: f64,
    pub negatives: usize,
}

impl Default for InductiveConfig {
    fn default() -> Self {
        InductiveConfig {
            window: 3,
            mapper_epochs: 20,
            mapper_batch: 512,
            mapper_lr: 0.001,
            posttrain_epochs: 10,
            posttrain_batch: 32,
            posttrain_lr: 0.001,
            lambda_r: 0.1,
            alpha3: 1.0,
            negatives: 1,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("bad value `{value}` for `{key}`")))
}

impl InductiveConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "window" => self.window = parse(key, value)?,
            "mapper_epochs" => self.mapper_epochs = parse(key, value)?,
            "mapper_batch" => self.mapper_batch = parse(key, value)?,
            "mapper_lr" => self.mapper_lr = parse(key, value)?,
            "posttrain_epochs" => self.posttrain_epochs = parse(key, value)?,
            "posttrain_batch" => self.posttrain_batch = parse(key, value)?,
            "posttrain_lr" => self.posttrain_lr = parse(key, value)?,
            "lambda_r" => self.lambda_r = parse(key, value)?,
            "posttrain_alpha3" => self.alpha3 = parse(key, value)?,
            "posttrain_negatives" => self.negatives = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn entries(&self) -> Vec<(String, String)> {
        [
            ("window", self.window.to_string()),
            ("mapper_epochs", self.mapper_epochs.to_string()),
            ("mapper_batch", self.mapper_batch.to_string()),
            ("mapper_lr", self.mapper_lr.to_string()),
            ("posttrain_epochs", self.posttrain_epochs.to_string()),
            ("posttrain_batch", self.posttrain_batch.to_string()),
            ("posttrain_lr", self.posttrain_lr.to_string()),
            ("lambda_r", self.lambda_r.to_string()),
            ("posttrain_alpha3", self.alpha3.to_string()),
            ("posttrain_negatives", self.negatives.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.mapper_batch == 0 || self.posttrain_batch == 0 {
            return Err(Error::invalid("window and batch sizes must be positive"));
        }
        if !(self.mapper_lr > 0.0 && self.posttrain_lr > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if !(self.lambda_r >= 0.0 && self.lambda_r.is_finite()) {
            return Err(Error::invalid(format!("lambda_r = {} must be non-negative", self.lambda_r)));
        }
        if !(0.0..=1.0).contains(&self.alpha3) {
            return Err(Error::invalid(format!("posttrain_alpha3 = {} outside [0, 1]", self.alpha3)));
        }
        Ok(())
    }
}

/// Names and shapes of the mapper tensors in a checkpoint directory.
#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct MapperManifest {
    window: usize,
    dim: usize,
    tensors: Vec<(String, usize, usize)>,
}

/// Writes each mapper tensor as a binary matrix plus `mapper.json` naming them.
pub fn save_mapper(dir: &Path, mp: &MapperParams) -> Result<()> {
    let d = mp.dim();
    let bias = Matrix::from_vec(1, d, mp.bias.clone())?;
    let tensors = [("conv", &mp.conv), ("bias", &bias), ("p1", &mp.p1), ("p2", &mp.p2)];
    for (name, m) in tensors {
        write_matrix(&dir.join(format!("{name}.bin")), m)?;
    }
    crate::trainer::save_adam(dir, "mapper_adam", &mp.adam, (1, mp.param_count()))?;
    let manifest = MapperManifest {
        window: mp.window,
        dim: d,
        tensors: tensors.iter().map(|(n, m)| (n.to_string(), m.rows(), m.cols())).collect(),
    };
    crate::io::write_json(&dir.join("mapper.json"), &manifest)
}

pub fn load_mapper(dir: &Path) -> Result<MapperParams> {
    let manifest: MapperManifest = crate::io::read_json(&dir.join("mapper.json"))?;
    let mut mp = MapperParams::zeros(manifest.dim, manifest.window);
    for (name, rows, cols) in &manifest.tensors {
        let m = read_matrix(&dir.join(format!("{name}.bin")))?;
        let target = match name.as_str() {
            "conv" => &mut mp.conv,
            "p1" => &mut mp.p1,
            "p2" => &mut mp.p2,
            "bias" => {
                if m.shape() != (1, manifest.dim) {
                    return Err(Error::Corrupt {
                        path: dir.join("bias.bin"),
                        message: format!("shape {} for a {}-dim mapper", m.shape_str(), manifest.dim),
                    });
                }
                mp.bias = m.into_vec();
                continue;
            }
            other => {
                return Err(Error::Corrupt {
                    path: dir.join("mapper.json"),
                    message: format!("unknown tensor `{other}`"),
                })
            }
        };
        if m.shape() != (*rows, *cols) || m.shape() != target.shape() {
            return Err(Error::Corrupt {
                path: dir.join(format!("{name}.bin")),
                message: format!("shape {} does not match {:?}", m.shape_str(), target.shape()),
            });
        }
        *target = m;
    }
    mp.adam = crate::trainer::load_adam(dir, "mapper_adam", (1, mp.param_count()))?;
    Ok(mp)
}

/// Text-to-structure mapper: convolution over word windows, max pooling and
/// two ReLU-separated linear layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapperParams {
    pub window: usize,
    /// `d × (window·d)`; the window's word vectors are concatenated in order.
    pub conv: Matrix,
    pub bias: Vec<f64>,
    pub p1: Matrix,
    pub p2: Matrix,
    pub adam: AdamState,
}

impl MapperParams {
    pub fn init(dim: usize, window: usize, rng: &mut RngStream) -> Result<Self> {
        if dim == 0 || window == 0 {
            return Err(Error::invalid("mapper needs positive dim and window"));
        }
        let mut draw = |rows: usize, cols: usize| {
            let bound = 1.0 / (cols as f64).sqrt();
            let data = (0..rows * cols).map(|_| (rng.uniform() * 2.0 - 1.0) * bound).collect();
            Matrix::from_vec(rows, cols, data).expect("sized")
        };
        let conv = draw(dim, window * dim);
        let p1 = draw(dim, dim);
        let p2 = draw(dim, dim);
        let mut mp = MapperParams {
            window,
            conv,
            bias: vec![0.0; dim],
            p1,
            p2,
            adam: AdamState::new(0),
        };
        mp.adam = AdamState::new(mp.param_count());
        Ok(mp)
    }

    pub fn zeros(dim: usize, window: usize) -> Self {
        let mut mp = MapperParams {
            window,
            conv: Matrix::zeros(dim, window * dim),
            bias: vec![0.0; dim],
            p1: Matrix::zeros(dim, dim),
            p2: Matrix::zeros(dim, dim),
            adam: AdamState::new(0),
        };
        mp.adam = AdamState::new(mp.param_count());
        mp
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn param_count(&self) -> usize {
        let d = self.dim();
        d * self.window * d + d + 2 * d * d
    }

    /// Parameters as one vector: conv, bias, p1, p2.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(self.conv.as_slice());
        v.extend_from_slice(&self.bias);
        v.extend_from_slice(self.p1.as_slice());
        v.extend_from_slice(self.p2.as_slice());
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let d = self.dim();
        let (c, rest) = flat.split_at(d * self.window * d);
        let (b, rest) = rest.split_at(d);
        let (p1, p2) = rest.split_at(d * d);
        self.conv.as_mut_slice().copy_from_slice(c);
        self.bias.copy_from_slice(b);
        self.p1.as_mut_slice().copy_from_slice(p1);
        self.p2.as_mut_slice().copy_from_slice(p2);
    }

    pub fn fingerprint(&self) -> u64 {
        Matrix::from_vec(1, self.param_count(), self.to_flat()).expect("sized").fingerprint()
    }
}

/// Forward artifacts of one mapper evaluation.
#[derive(Clone, Debug)]
pub struct MapperCache {
    /// Concatenated window input that won the max per output coordinate;
    /// `None` when the winner is the all-padding window.
    winners: Vec<Option<usize>>,
    windows: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    hidden: Vec<f64>,
    pub output: Vec<f64>,
}

/// Runs the mapper on a text given by its real token ids, padded to
/// `max_len` with zero vectors.
pub fn mapper_forward_ids(ids: &[TokenId], max_len: usize, words: &Matrix, mp: &MapperParams) -> MapperCache {
    let d = mp.dim();
    let l = mp.window;
    let n = ids.len().min(max_len);
    let count = max_len.saturating_sub(l) + 1;
    // windows with at least one real token, then at most one all-pad window
    let real_windows = n.min(count);
    let has_pad_window = real_windows < count;
    let windows: Vec<Vec<f64>> = (0..real_windows)
        .map(|j| {
            let mut x = vec![0.0; l * d];
            for k in 0..l {
                if j + k < n {
                    x[k * d..(k + 1) * d].copy_from_slice(words.row(ids[j + k] as usize));
                }
            }
            x
        })
        .collect();
    let mut pooled = vec![f64::NEG_INFINITY; d];
    let mut winners = vec![None; d];
    for (j, x) in windows.iter().enumerate() {
        for c in 0..d {
            let v = dot(mp.conv.row(c), x) + mp.bias[c];
            if v > pooled[c] {
                pooled[c] = v;
                winners[c] = Some(j);
            }
        }
    }
    if has_pad_window {
        for c in 0..d {
            if mp.bias[c] > pooled[c] {
                pooled[c] = mp.bias[c];
                winners[c] = None;
            }
        }
    }
    let act: Vec<f64> = pooled.iter().map(|&v| relu(v)).collect();
    let hidden = mp.p1.matvec(&act).expect("sized");
    let act2: Vec<f64> = hidden.iter().map(|&v| relu(v)).collect();
    let output = mp.p2.matvec(&act2).expect("sized");
    MapperCache {
        winners,
        windows,
        pooled,
        hidden,
        output,
    }
}

/// Mapper output for a padded text.
pub fn mapper_forward(text: &PaddedText, words: &Matrix, mp: &MapperParams) -> Vec<f64> {
    let ids: Vec<TokenId> = text.ids.iter().zip(&text.mask).filter(|(_, &m)| m).map(|(&i, _)| i).collect();
    mapper_forward_ids(&ids, text.len(), words, mp).output
}

/// Adds the gradient of `g · output` w.r.t. the mapper parameters into
/// `grad` (flat layout of [`MapperParams::to_flat`]).
pub fn mapper_backward(cache: &MapperCache, g: &[f64], mp: &MapperParams, grad: &mut [f64]) {
    let d = mp.dim();
    let l = mp.window;
    let (gc, rest) = grad.split_at_mut(d * l * d);
    let (gb, rest) = rest.split_at_mut(d);
    let (gp1, gp2) = rest.split_at_mut(d * d);
    let act2: Vec<f64> = cache.hidden.iter().map(|&v| relu(v)).collect();
    for r in 0..d {
        axpy(g[r], &act2, &mut gp2[r * d..(r + 1) * d]);
    }
    let g_act2 = mp.p2.transpose_matvec(g).expect("sized");
    let g_hidden: Vec<f64> = g_act2.iter().zip(&cache.hidden).map(|(&a, &h)| if h > 0.0 { a } else { 0.0 }).collect();
    let act: Vec<f64> = cache.pooled.iter().map(|&v| relu(v)).collect();
    for r in 0..d {
        axpy(g_hidden[r], &act, &mut gp1[r * d..(r + 1) * d]);
    }
    let g_act = mp.p1.transpose_matvec(&g_hidden).expect("sized");
    for c in 0..d {
        if cache.pooled[c] <= 0.0 || g_act[c] == 0.0 {
            continue;
        }
        gb[c] += g_act[c];
        if let Some(j) = cache.winners[c] {
            axpy(g_act[c], &cache.windows[j], &mut gc[c * l * d..(c + 1) * l * d]);
        }
    }
}

/// Fits the mapper to `targets` rows of the seen nodes by mean squared error;
/// returns the per-epoch mean loss per node.
pub fn fit_mapper(
    seen: &[NodeId],
    texts: &[Vec<TokenId>],
    targets: &Matrix,
    words: &Matrix,
    max_len: usize,
    cfg: &InductiveConfig,
    mp: &mut MapperParams,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if seen.is_empty() {
        return Err(Error::invalid("mapper needs at least one seen node"));
    }
    let mut order = seen.to_vec();
    let mut losses = Vec::with_capacity(cfg.mapper_epochs);
    for _ in 0..cfg.mapper_epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.mapper_batch) {
            let parts: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .map(|&i| {
                    let cache = mapper_forward_ids(&texts[i], max_len, words, mp);
                    let diff: Vec<f64> = cache.output.iter().zip(targets.row(i)).map(|(a, b)| a - b).collect();
                    let g: Vec<f64> = diff.iter().map(|x| 2.0 * x).collect();
                    let mut grad = vec![0.0; mp.param_count()];
                    mapper_backward(&cache, &g, mp, &mut grad);
                    (dot(&diff, &diff), grad)
                })
                .collect();
            let mut grad = vec![0.0; mp.param_count()];
            for (l, g) in parts {
                epoch_loss += l;
                axpy(1.0, &g, &mut grad);
            }
            let mut flat = mp.to_flat();
            mp.adam.step(&mut flat, &grad, cfg.mapper_lr)?;
            mp.set_flat(&flat);
        }
        let mean = epoch_loss / seen.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Numerical(format!("mapper loss is {mean}")));
        }
        log::info!("mapper epoch loss {mean}");
        losses.push(mean);
    }
    Ok(losses)
}

/// Frozen inputs and the mutable unseen table of the post-training stage.
#[derive(Clone, Debug)]
pub struct UnseenState {
    pub unseen: Vec<NodeId>,
    /// Mapper prediction per unseen node, row-aligned with `unseen`.
    pub prior: Matrix,
    /// Current embeddings of the unseen nodes, row-aligned with `unseen`.
    pub table: Matrix,
}

impl UnseenState {
    /// Starts every unseen row at its mapper prediction.
    pub fn new(unseen: Vec<NodeId>, texts: &[Vec<TokenId>], words: &Matrix, max_len: usize, mp: &MapperParams) -> Self {
        let d = mp.dim();
        let rows: Vec<Vec<f64>> = unseen
            .par_iter()
            .map(|&i| mapper_forward_ids(&texts[i], max_len, words, mp).output)
            .collect();
        let mut prior = Matrix::zeros(unseen.len(), d);
        for (k, r) in rows.iter().enumerate() {
            prior.row_mut(k).copy_from_slice(r);
        }
        UnseenState {
            unseen,
            table: prior.clone(),
            prior,
        }
    }

    /// Structure table with the unseen rows substituted.
    pub fn combined(&self, structure: &Matrix) -> Matrix {
        let mut z = structure.clone();
        for (k, &i) in self.unseen.iter().enumerate() {
            z.row_mut(i).copy_from_slice(self.table.row(k));
        }
        z
    }

    /// `2λ_r (z̃ − prior)` for every unseen row.
    pub fn regularizer_grad(&self, lambda_r: f64) -> Matrix {
        let mut g = self.table.sub(&self.prior).expect("aligned");
        g.scale(2.0 * lambda_r);
        g
    }
}

/// Per-epoch summary of post-training.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PostTrainLog {
    pub epoch: usize,
    pub mean_reward: f64,
    pub regularizer: f64,
}

/// Gradient of the post-training surrogate on the unseen table for `batch`
/// (positions into `state.unseen`), using pre-drawn partners and negatives.
/// Returns `(gradient, Σ rewards)`.
pub fn posttrain_grad(
    state: &UnseenState,
    batch: &[usize],
    partners: &[(NodeId, Vec<NodeId>)],
    scorer: &PairScorer,
    cfg: &InductiveConfig,
) -> Result<(Matrix, f64)> {
    let combined = scorer.structure;
    let index: std::collections::HashMap<NodeId, usize> =
        state.unseen.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let parts: Vec<Result<(f64, RowGrad)>> = batch
        .par_iter()
        .zip(partners.par_iter())
        .map(|(&k, (j, negs))| {
            let i = state.unseen[k];
            let reward = log_sigmoid(-{
                let p = scorer.forward(i, *j)?;
                dot(&p.zt_ij, &p.zt_ji)
            });
            let (_, mut g) = log_gen_ns_with(i, *j, combined, negs);
            g.scale(cfg.alpha3 * reward);
            Ok((reward, g))
        })
        .collect();
    let mut grad = Matrix::zeros(state.table.rows(), state.table.cols());
    let mut rewards = 0.0;
    for part in parts {
        let (r, g) = part?;
        rewards += r;
        for (node, row) in g.rows {
            // only unseen rows are trainable
            if let Some(&k) = index.get(&node) {
                axpy(1.0, &row, grad.row_mut(k));
            }
        }
    }
    let reg = state.regularizer_grad(cfg.lambda_r);
    for &k in batch {
        axpy(1.0, reg.row(k), grad.row_mut(k));
    }
    Ok((grad, rewards))
}

/// Refines the unseen table with every trained table frozen.
pub fn posttrain_unseen(
    state: &mut UnseenState,
    params: &ModelParams,
    texts: &[Vec<TokenId>],
    attention: AttentionConfig,
    sampler: &DegreeSampler,
    cfg: &InductiveConfig,
    seed: u64,
) -> Result<Vec<PostTrainLog>> {
    let mut logs = Vec::new();
    if state.unseen.is_empty() {
        return Ok(logs);
    }
    cfg.validate()?;
    let mut rng = RngStream::new(seed, Substream::PostTrain);
    let mut adam = AdamState::for_matrix(&state.table);
    let mut order: Vec<usize> = (0..state.unseen.len()).collect();
    for epoch in 0..cfg.posttrain_epochs {
        rng.shuffle(&mut order);
        let mut reward_sum = 0.0;
        for batch in order.chunks(cfg.posttrain_batch) {
            let combined = state.combined(&params.structure);
            let mut partners = Vec::with_capacity(batch.len());
            for &k in batch {
                let i = state.unseen[k];
                let j = gen_sample(i, &combined, None, &mut rng)?;
                partners.push((j, sample_negatives(sampler, cfg.negatives, &mut rng)));
            }
            let scorer = PairScorer {
                words: &params.words,
                structure: &combined,
                texts,
                attention,
            };
            let (grad, rewards) = posttrain_grad(state, batch, &partners, &scorer, cfg)?;
            reward_sum += rewards;
            adam.step_matrix(&mut state.table, &grad, cfg.posttrain_lr)?;
            state.table.check_finite("unseen embeddings")?;
        }
        let diff = state.table.sub(&state.prior)?;
        let log = PostTrainLog {
            epoch: epoch + 1,
            mean_reward: reward_sum / state.unseen.len() as f64,
            regularizer: cfg.lambda_r * dot(diff.as_slice(), diff.as_slice()),
        };
        log::info!("{}", serde_json::to_string(&log)?);
        logs.push(log);
    }
    Ok(logs)
}
