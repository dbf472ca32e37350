//! Generator pretraining, the alternating discriminator/generator loop,
//! the joint-loss baseline, checkpoints and final embedding aggregation.

mod aggregate;
mod checkpoint;
mod config;
mod joint;

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate_embeddings, Expectation};
pub use checkpoint::{load_params, save_params};
pub(crate) use checkpoint::{load_adam, save_adam};
pub use config::{eta_for_ratio, JointWeights, Mode, TrainConfig};
pub use joint::{joint_loss_step, joint_terms, JointStep, JointTerms};

use crate::adversarial::{
    disc_loss_and_grad, gen_policy_grad, gen_sample, log_gen_ns_with, sample_negatives, AdvConfig, GenContext,
    ModelParams, PairScorer, RowGrad,
};
use crate::corpus::{adjacency, degrees_of, undirected, NodeId, TokenId};
use crate::error::{Error, Result};
use crate::eval::{auc_score, gen_fake_edges_among};
use crate::numerics::{dot, DegreeSampler, Matrix, RngState, RngStream, Substream};

/// Inputs of a training run that never change during it.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub node_count: usize,
    /// Real token ids of each node's text.
    pub texts: Vec<Vec<TokenId>>,
    pub train_edges: Vec<(NodeId, NodeId)>,
    /// Nodes visible during training; `None` means every node.
    pub support: Option<Vec<bool>>,
    /// Percentage used to pick the supervised generator weight.
    pub ratio: f64,
}

impl TrainData {
    fn support_nodes(&self) -> Vec<NodeId> {
        match &self.support {
            Some(s) => (0..self.node_count).filter(|&i| s[i]).collect(),
            None => (0..self.node_count).collect(),
        }
    }
}

/// Losses of one epoch. Absent entries did not run in that epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub phase: String,
    pub pretrain_loss: Option<f64>,
    pub disc_loss: Option<f64>,
    pub gen_reward: Option<f64>,
    pub gen_surrogate: Option<f64>,
    pub joint_loss: Option<f64>,
    pub validation_auc: Option<f64>,
}

/// Everything besides the parameters that a resumed run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub config: TrainConfig,
    pub pretrain_epochs_done: usize,
    pub epochs_done: usize,
    pub batches_rng: RngState,
    pub generator_rng: RngState,
    pub negatives_rng: RngState,
    pub history: Vec<EpochLog>,
    pub best_auc: Option<f64>,
    pub best_epoch: Option<usize>,
    pub bad_epochs: usize,
    pub stopped_early: bool,
}

/// Result of a finished run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub state: TrainState,
}

/// Ascends the negative-sampling generator likelihood on training edges.
pub fn pretrain_generator(
    params: &mut ModelParams,
    train_edges: &[(NodeId, NodeId)],
    sampler: &DegreeSampler,
    cfg: &TrainConfig,
    batches: &mut RngStream,
    negatives: &mut RngStream,
) -> Result<f64> {
    if train_edges.is_empty() {
        return Err(Error::invalid("pretraining needs at least one training edge"));
    }
    let mut order: Vec<usize> = (0..train_edges.len()).collect();
    batches.shuffle(&mut order);
    let mut total = 0.0;
    for chunk in order.chunks(cfg.batch_size) {
        let mut grad = RowGrad::default();
        for &e in chunk {
            let (u, v) = train_edges[e];
            let (i, j) = if batches.coin() { (u, v) } else { (v, u) };
            let negs = sample_negatives(sampler, cfg.negatives, negatives);
            let (val, g) = log_gen_ns_with(i, j, &params.structure, &negs);
            total -= val;
            grad.rows.extend(g.rows);
        }
        grad.scale(-1.0);
        let dense = grad.to_dense(params.structure.rows(), params.structure.cols());
        params.step_structure(&dense, cfg.lr)?;
    }
    if !total.is_finite() {
        return Err(Error::Numerical(format!("pretraining loss is {total}")));
    }
    Ok(total / train_edges.len() as f64)
}

/// Training loop with checkpoint/resume support.
pub struct Trainer<'a> {
    data: &'a TrainData,
    cfg: TrainConfig,
    adv: AdvConfig,
    params: ModelParams,
    best: Option<ModelParams>,
    state: TrainState,
    train: Vec<(NodeId, NodeId)>,
    validation: Vec<(NodeId, NodeId)>,
    validation_fakes: Vec<(NodeId, NodeId)>,
    sampler: DegreeSampler,
    neighbors: Vec<Vec<NodeId>>,
    support_nodes: Vec<NodeId>,
    batches: RngStream,
    generator: RngStream,
    negatives: RngStream,
}

const STATE_FILE: &str = "state.json";

impl<'a> Trainer<'a> {
    pub fn new(data: &'a TrainData, cfg: TrainConfig, params: ModelParams) -> Result<Self> {
        let state = TrainState {
            pretrain_epochs_done: 0,
            epochs_done: 0,
            batches_rng: RngStream::new(cfg.seed, Substream::Batches).state(),
            generator_rng: RngStream::new(cfg.seed, Substream::Generator).state(),
            negatives_rng: RngStream::new(cfg.seed, Substream::Negatives).state(),
            history: Vec::new(),
            best_auc: None,
            best_epoch: None,
            bad_epochs: 0,
            stopped_early: false,
            config: cfg,
        };
        Self::with_state(data, params, None, state)
    }

    /// Fresh parameters initialized from the configured seed.
    pub fn init_params(data: &TrainData, vocab_size: usize, cfg: &TrainConfig) -> Result<ModelParams> {
        let mut rng = RngStream::new(cfg.seed, Substream::Init);
        ModelParams::init(data.node_count, vocab_size, cfg.dim, &mut rng)
    }

    fn with_state(data: &'a TrainData, params: ModelParams, best: Option<ModelParams>, state: TrainState) -> Result<Self> {
        let cfg = state.config.clone();
        cfg.validate()?;
        if data.train_edges.is_empty() {
            return Err(Error::invalid("no training edges"));
        }
        if data.texts.len() != data.node_count || params.structure.rows() != data.node_count {
            return Err(Error::shape(
                format!("{} nodes", data.node_count),
                format!("{} texts / {} structure rows", data.texts.len(), params.structure.rows()),
            ));
        }
        if params.dim() != cfg.dim {
            return Err(Error::shape(format!("dim {}", cfg.dim), params.structure.shape_str()));
        }
        let adv = cfg.adversarial(data.ratio);
        // internal validation edges, fixed by the seed
        let mut order: Vec<usize> = (0..data.train_edges.len()).collect();
        let mut vrng = RngStream::new(cfg.seed, Substream::Validation);
        let n_val = if cfg.patience > 0 {
            ((cfg.validation_fraction * data.train_edges.len() as f64).round() as usize).min(data.train_edges.len() - 1)
        } else {
            0
        };
        vrng.shuffle(&mut order);
        let (val_idx, train_idx) = order.split_at(n_val);
        let mut train_idx = train_idx.to_vec();
        train_idx.sort_unstable();
        let mut val_idx = val_idx.to_vec();
        val_idx.sort_unstable();
        let train: Vec<_> = train_idx.iter().map(|&k| data.train_edges[k]).collect();
        let validation: Vec<_> = val_idx.iter().map(|&k| data.train_edges[k]).collect();
        let support_nodes = data.support_nodes();
        let validation_fakes = if validation.is_empty() {
            Vec::new()
        } else {
            let known: HashSet<(NodeId, NodeId)> =
                data.train_edges.iter().map(|&(u, v)| undirected(u, v)).collect();
            gen_fake_edges_among(&validation, &support_nodes, &known, &mut vrng)?
        };
        let sampler = DegreeSampler::new(&degrees_of(data.node_count, &train))?;
        let neighbors = adjacency(data.node_count, &train);
        Ok(Trainer {
            data,
            adv,
            batches: RngStream::restore(state.batches_rng),
            generator: RngStream::restore(state.generator_rng),
            negatives: RngStream::restore(state.negatives_rng),
            cfg,
            params,
            best,
            state,
            train,
            validation,
            validation_fakes,
            sampler,
            neighbors,
            support_nodes,
        })
    }

    /// Reopens a run from a checkpoint directory written by [`Trainer::checkpoint`].
    pub fn resume(data: &'a TrainData, dir: &Path) -> Result<Self> {
        let state: TrainState = crate::io::read_json(&dir.join(STATE_FILE))?;
        let params = load_params(&dir.join("params"))?;
        let best_dir = dir.join("best");
        let best = if state.best_epoch.is_some() && best_dir.exists() {
            Some(load_params(&best_dir)?)
        } else {
            None
        };
        Self::with_state(data, params, best, state)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn adversarial_config(&self) -> &AdvConfig {
        &self.adv
    }

    /// Changes the epoch budget, e.g. to extend a resumed run. Nothing in
    /// the loop depends on the total, so an extended run matches one that
    /// was given the larger budget from the start.
    pub fn set_epochs(&mut self, epochs: usize) {
        self.cfg.epochs = epochs;
        self.state.config.epochs = epochs;
    }

    pub fn is_finished(&self) -> bool {
        self.state.stopped_early
            || (self.state.epochs_done >= self.cfg.epochs && self.pretrain_remaining() == 0)
    }

    fn pretrain_remaining(&self) -> usize {
        if self.cfg.mode.is_adversarial() {
            self.cfg.pretrain_epochs.saturating_sub(self.state.pretrain_epochs_done)
        } else {
            0
        }
    }

    fn sync_rng_state(&mut self) {
        self.state.batches_rng = self.batches.state();
        self.state.generator_rng = self.generator.state();
        self.state.negatives_rng = self.negatives.state();
    }

    /// Writes parameters, the best snapshot and the loop state.
    pub fn checkpoint(&mut self, dir: &Path) -> Result<()> {
        self.sync_rng_state();
        save_params(&dir.join("params"), &self.params)?;
        if let Some(b) = &self.best {
            save_params(&dir.join("best"), b)?;
        }
        crate::io::write_json(&dir.join(STATE_FILE), &self.state)
    }

    /// Runs one pretraining or training epoch; returns `false` once finished.
    pub fn step_epoch(&mut self) -> Result<bool> {
        if self.is_finished() {
            return Ok(false);
        }
        let log = if self.pretrain_remaining() > 0 {
            let loss = pretrain_generator(
                &mut self.params,
                &self.train,
                &self.sampler,
                &self.cfg,
                &mut self.batches,
                &mut self.negatives,
            )?;
            self.state.pretrain_epochs_done += 1;
            EpochLog {
                epoch: self.state.pretrain_epochs_done,
                phase: "pretrain".into(),
                pretrain_loss: Some(loss),
                ..EpochLog::default()
            }
        } else {
            let mut log = if self.cfg.mode.is_adversarial() {
                self.adversarial_epoch()?
            } else {
                self.joint_epoch()?
            };
            self.state.epochs_done += 1;
            log.epoch = self.state.epochs_done;
            self.validate(&mut log)?;
            log
        };
        log::info!("{}", serde_json::to_string(&log)?);
        self.state.history.push(log);
        self.sync_rng_state();
        Ok(!self.is_finished())
    }

    fn iterations(&self) -> usize {
        self.train.len().div_ceil(self.cfg.batch_size)
    }

    fn next_batch(&mut self, order: &[usize], cursor: &mut usize) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.cfg.batch_size.min(order.len()));
        for _ in 0..self.cfg.batch_size.min(order.len()) {
            let (u, v) = self.train[order[*cursor % order.len()]];
            *cursor += 1;
            out.push(if self.batches.coin() { (u, v) } else { (v, u) });
        }
        out
    }

    fn adversarial_epoch(&mut self) -> Result<EpochLog> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        self.batches.shuffle(&mut order);
        let mut cursor = 0;
        let attention = self.cfg.attention();
        let (mut d_loss, mut d_count) = (0.0, 0usize);
        let (mut reward, mut surrogate, mut g_count) = (0.0, 0.0, 0usize);
        for _ in 0..self.iterations() {
            for _ in 0..self.cfg.d_steps {
                let pos = self.next_batch(&order, &mut cursor);
                let mut neg = Vec::with_capacity(pos.len() * self.adv.negatives);
                for &(i, _) in &pos {
                    for _ in 0..self.adv.negatives {
                        let j = gen_sample(i, &self.params.structure, self.data.support.as_deref(), &mut self.generator)?;
                        neg.push((i, j));
                    }
                }
                let before = self.params.structure.fingerprint();
                let scorer = PairScorer::new(&self.params, &self.data.texts, attention);
                let (loss, grad) = disc_loss_and_grad(&pos, &neg, &scorer, &self.adv)?;
                self.params.step_words(&grad, self.cfg.lr)?;
                debug_assert_eq!(before, self.params.structure.fingerprint());
                d_loss += loss / (pos.len() + neg.len()) as f64;
                d_count += 1;
            }
            for _ in 0..self.cfg.g_steps {
                let n = self.cfg.batch_size.min(self.support_nodes.len());
                let nodes: Vec<NodeId> = (0..n)
                    .map(|_| self.support_nodes[self.batches.below(self.support_nodes.len())])
                    .collect();
                let ctx = GenContext {
                    sampler: &self.sampler,
                    neighbors: &self.neighbors,
                    support: self.data.support.as_deref(),
                };
                let scorer = PairScorer::new(&self.params, &self.data.texts, attention);
                let (grad, stats) = gen_policy_grad(&nodes, &scorer, &ctx, &self.adv, &mut self.generator)?;
                self.params.step_structure(&grad, self.cfg.lr)?;
                reward += stats.mean_reward;
                surrogate += stats.surrogate / n as f64;
                g_count += 1;
            }
        }
        Ok(EpochLog {
            phase: "train".into(),
            disc_loss: (d_count > 0).then(|| d_loss / d_count as f64),
            gen_reward: (g_count > 0).then(|| reward / g_count as f64),
            gen_surrogate: (g_count > 0).then(|| surrogate / g_count as f64),
            ..EpochLog::default()
        })
    }

    fn joint_epoch(&mut self) -> Result<EpochLog> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        self.batches.shuffle(&mut order);
        let mut cursor = 0;
        let attention = self.cfg.attention();
        let (mut total, mut count) = (0.0, 0usize);
        for _ in 0..self.iterations() {
            let edges = self.next_batch(&order, &mut cursor);
            let negs: Vec<Vec<NodeId>> = edges
                .iter()
                .map(|_| sample_negatives(&self.sampler, self.cfg.negatives, &mut self.negatives))
                .collect();
            let scorer = PairScorer::new(&self.params, &self.data.texts, attention);
            let step = joint_loss_step(&edges, &negs, &scorer, &self.cfg.joint)?;
            self.params.step_structure(&step.structure_grad, self.cfg.lr)?;
            self.params.step_words(&step.word_grad, self.cfg.lr)?;
            total += step.loss / edges.len() as f64;
            count += 1;
        }
        Ok(EpochLog {
            phase: "train".into(),
            joint_loss: Some(total / count.max(1) as f64),
            ..EpochLog::default()
        })
    }

    /// AUC of held-out training edges against fixed fakes, scoring a pair by
    /// the dot product of its two context-aware embeddings.
    pub fn validation_auc(&self) -> Result<Option<f64>> {
        if self.validation.is_empty() {
            return Ok(None);
        }
        let scorer = PairScorer::new(&self.params, &self.data.texts, self.cfg.attention());
        let score = |edges: &[(NodeId, NodeId)]| -> Result<Vec<f64>> {
            edges
                .par_iter()
                .map(|&(u, v)| {
                    let p = scorer.forward(u, v)?;
                    Ok(dot(scorer.structure.row(u), scorer.structure.row(v)) + dot(&p.zt_ij, &p.zt_ji))
                })
                .collect()
        };
        Ok(Some(auc_score(&score(&self.validation)?, &score(&self.validation_fakes)?)?))
    }

    fn validate(&mut self, log: &mut EpochLog) -> Result<()> {
        let Some(auc) = self.validation_auc()? else {
            return Ok(());
        };
        log.validation_auc = Some(auc);
        if self.state.best_auc.is_none_or(|b| auc > b) {
            self.state.best_auc = Some(auc);
            self.state.best_epoch = Some(self.state.epochs_done);
            self.state.bad_epochs = 0;
            self.best = Some(self.params.clone());
        } else {
            self.state.bad_epochs += 1;
            if self.state.bad_epochs >= self.cfg.patience {
                self.state.stopped_early = true;
            }
        }
        Ok(())
    }

    /// Runs to completion, checkpointing after every epoch when `dir` is set.
    /// On a numerical failure the last good checkpoint is left in place and a
    /// `failure.json` note is written next to it.
    pub fn run(mut self, dir: Option<&Path>) -> Result<TrainOutcome> {
        while !self.is_finished() {
            match self.step_epoch() {
                Ok(_) => {
                    if let Some(d) = dir {
                        self.checkpoint(d)?;
                    }
                }
                Err(e) => {
                    if let (Some(d), true) = (dir, e.is_numerical()) {
                        let note = serde_json::json!({
                            "error": e.to_string(),
                            "epochs_done": self.state.epochs_done,
                            "pretrain_epochs_done": self.state.pretrain_epochs_done,
                        });
                        crate::io::write_json(&d.join("failure.json"), &note)?;
                    }
                    return Err(e);
                }
            }
        }
        Ok(self.finish())
    }

    /// Final parameters: the best validation snapshot when one exists.
    pub fn finish(mut self) -> TrainOutcome {
        self.sync_rng_state();
        let params = self.best.take().unwrap_or(self.params);
        TrainOutcome {
            params,
            state: self.state,
        }
    }
}

/// Aggregated `|V|×2d` embeddings for trained parameters.
pub fn final_embeddings(
    params: &ModelParams,
    texts: &[Vec<TokenId>],
    cfg: &TrainConfig,
    support: Option<&[bool]>,
) -> Result<Matrix> {
    let scorer = PairScorer::new(params, texts, cfg.attention());
    let how = Expectation::choose(params.structure.rows(), cfg.exact_threshold, cfg.aggregate_samples);
    let mut rng = RngStream::new(cfg.seed, Substream::Aggregate);
    aggregate_embeddings(&scorer, support, how, &mut rng)
}
