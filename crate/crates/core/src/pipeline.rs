//! End-to-end protocols: transductive link prediction, unseen-node link
//! prediction and node classification.

use std::path::Path;

use crate::adversarial::{real_token_ids, ModelParams};
use crate::config::RunConfig;
use crate::corpus::{build_vocab, degrees_of, encode_graph, EdgeSplit, NodeSplit, PaddedText, TextualGraph, TokenId, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{classify_nodes, link_prediction_eval, ClassifyReport, LinkEvalReport, ReportMeta};
use crate::inductive::{fit_mapper, posttrain_unseen, MapperParams, PostTrainLog, UnseenState};
use crate::numerics::{DegreeSampler, Matrix, RngStream, Substream};
use crate::trainer::{final_embeddings, TrainConfig, TrainData, TrainOutcome, Trainer};

/// A graph with its vocabulary and encoded texts.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub graph: TextualGraph,
    pub vocab: Vocabulary,
    pub padded: Vec<PaddedText>,
    /// Real token ids per node.
    pub texts: Vec<Vec<TokenId>>,
}

impl Prepared {
    pub fn new(graph: TextualGraph, min_count: usize, max_len: usize) -> Result<Self> {
        let vocab = build_vocab(&graph, min_count)?;
        Ok(Self::with_vocab(graph, vocab, max_len))
    }

    pub fn with_vocab(graph: TextualGraph, vocab: Vocabulary, max_len: usize) -> Self {
        let padded = encode_graph(&graph, &vocab, max_len);
        let texts = real_token_ids(&padded);
        Prepared {
            graph,
            vocab,
            padded,
            texts,
        }
    }
}

/// Trains on `train_edges` and returns the outcome with aggregated embeddings.
/// An existing checkpoint in `checkpoint` is resumed; only `epochs` may
/// differ from the configuration it was written with.
pub fn train_embeddings(
    prepared: &Prepared,
    train_edges: Vec<(usize, usize)>,
    support: Option<Vec<bool>>,
    ratio: f64,
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
) -> Result<(TrainOutcome, Matrix)> {
    let data = TrainData {
        node_count: prepared.graph.node_count(),
        texts: prepared.texts.clone(),
        train_edges,
        support,
        ratio,
    };
    let trainer = match checkpoint {
        Some(dir) if dir.join("state.json").exists() => {
            let mut t = Trainer::resume(&data, dir)?;
            let saved = TrainConfig {
                epochs: cfg.train.epochs,
                ..t.config().clone()
            };
            if saved != cfg.train {
                return Err(Error::invalid(format!(
                    "checkpoint in {} was written with a different configuration",
                    dir.display()
                )));
            }
            t.set_epochs(cfg.train.epochs);
            t
        }
        _ => {
            let params = Trainer::init_params(&data, prepared.vocab.size(), &cfg.train)?;
            Trainer::new(&data, cfg.train.clone(), params)?
        }
    };
    let outcome = trainer.run(checkpoint)?;
    let z = final_embeddings(&outcome.params, &prepared.texts, &cfg.train, data.support.as_deref())?;
    Ok((outcome, z))
}

pub struct TransductiveRun {
    pub outcome: TrainOutcome,
    pub embeddings: Matrix,
    pub report: LinkEvalReport,
}

pub fn meta(ratio: f64, cfg: &RunConfig) -> ReportMeta {
    ReportMeta {
        ratio,
        seed: cfg.train.seed,
        mode: cfg.train.mode.to_string(),
    }
}

/// Trains on the split's training edges and scores its test edges.
pub fn run_transductive(
    prepared: &Prepared,
    split: &EdgeSplit,
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
) -> Result<TransductiveRun> {
    cfg.validate()?;
    let test = split.test_edges(&prepared.graph);
    if test.is_empty() {
        return Err(Error::invalid("split has no test edges"));
    }
    let (outcome, embeddings) =
        train_embeddings(prepared, split.train_edges(&prepared.graph), None, split.ratio, cfg, checkpoint)?;
    let report = link_prediction_eval(&embeddings, &test, &prepared.graph, cfg.repetitions, meta(split.ratio, cfg))?;
    Ok(TransductiveRun {
        outcome,
        embeddings,
        report,
    })
}

pub struct UnseenRun {
    pub outcome: TrainOutcome,
    pub mapper: MapperParams,
    pub mapper_losses: Vec<f64>,
    pub state: UnseenState,
    pub posttrain: Vec<PostTrainLog>,
    pub embeddings: Matrix,
    pub report: LinkEvalReport,
}

/// Mapper fit, initialization and post-training for the unseen nodes of a
/// node split, starting from parameters trained on the seen nodes.
pub fn learn_unseen(
    prepared: &Prepared,
    split: &NodeSplit,
    params: &ModelParams,
    cfg: &RunConfig,
) -> Result<(MapperParams, Vec<f64>, UnseenState, Vec<PostTrainLog>)> {
    let tc = &cfg.train;
    let mut rng = RngStream::new(tc.seed, Substream::Mapper);
    let mut mapper = MapperParams::init(tc.dim, cfg.inductive.window, &mut rng)?;
    let losses = fit_mapper(
        &split.seen,
        &prepared.texts,
        &params.structure,
        &params.words,
        tc.max_len,
        &cfg.inductive,
        &mut mapper,
        &mut rng,
    )?;
    let mut state = UnseenState::new(split.unseen.clone(), &prepared.texts, &params.words, tc.max_len, &mapper);
    let train = split.train_edges(&prepared.graph);
    let sampler = DegreeSampler::new(&degrees_of(prepared.graph.node_count(), &train))?;
    let logs = posttrain_unseen(&mut state, params, &prepared.texts, tc.attention(), &sampler, &cfg.inductive, tc.seed)?;
    Ok((mapper, losses, state, logs))
}

/// Unseen-node protocol: train on seen nodes, learn unseen embeddings, score
/// the edges touching unseen nodes.
pub fn run_unseen(prepared: &Prepared, split: &NodeSplit, cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<UnseenRun> {
    cfg.validate()?;
    let test = split.test_edges(&prepared.graph);
    let mut support = vec![false; prepared.graph.node_count()];
    for &v in &split.seen {
        support[v] = true;
    }
    let (outcome, _) = train_embeddings(
        prepared,
        split.train_edges(&prepared.graph),
        Some(support),
        split.ratio,
        cfg,
        checkpoint,
    )?;
    let (mapper, mapper_losses, state, posttrain) = learn_unseen(prepared, split, &outcome.params, cfg)?;
    let mut combined = outcome.params.clone();
    combined.structure = state.combined(&outcome.params.structure);
    let embeddings = final_embeddings(&combined, &prepared.texts, &cfg.train, None)?;
    let report = link_prediction_eval(&embeddings, &test, &prepared.graph, cfg.repetitions, meta(split.ratio, cfg))?;
    Ok(UnseenRun {
        outcome,
        mapper,
        mapper_losses,
        state,
        posttrain,
        embeddings,
        report,
    })
}

/// Node classification on embeddings for a labeled percentage.
pub fn run_classification(z: &Matrix, graph: &TextualGraph, labeled_ratio: f64, cfg: &RunConfig) -> Result<ClassifyReport> {
    let labels = graph
        .labels()
        .ok_or_else(|| Error::MissingArtifact("node labels".into()))?;
    classify_nodes(
        z,
        labels,
        graph.label_names().len(),
        cfg.repetitions,
        meta(labeled_ratio, cfg),
        &cfg.classifier,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{split_edges, split_nodes_unseen};
    use crate::synthetic::PlantedPartition;

    fn quick_cfg() -> RunConfig {
        let mut c = RunConfig::default();
        c.apply_text(
            "dim = 8\nbatch_size = 16\nepochs = 3\npretrain_epochs = 3\nmax_len = 12\nlr = 0.01\n\
             patience = 0\nrepetitions = 2\nmapper_epochs = 3\nposttrain_epochs = 2\nclassifier_epochs = 20",
        )
        .unwrap();
        c
    }

    #[test]
    fn extended_resume_matches_uninterrupted_run() {
        let g = PlantedPartition::default().generate(5).unwrap();
        let mut cfg = quick_cfg();
        cfg.train.epochs = 4;
        let prepared = Prepared::new(g, 1, cfg.train.max_len).unwrap();
        let split = split_edges(&prepared.graph, 55.0, 2).unwrap();
        let edges = split.train_edges(&prepared.graph);
        let (full, z_full) = train_embeddings(&prepared, edges.clone(), None, 55.0, &cfg, None).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let mut short = cfg.clone();
        short.train.epochs = 2;
        train_embeddings(&prepared, edges.clone(), None, 55.0, &short, Some(dir.path())).unwrap();
        let (resumed, z) = train_embeddings(&prepared, edges.clone(), None, 55.0, &cfg, Some(dir.path())).unwrap();
        assert_eq!(resumed.state, full.state);
        assert_eq!(z, z_full);

        let mut other = cfg.clone();
        other.train.lr = 0.02;
        let e = train_embeddings(&prepared, edges, None, 55.0, &other, Some(dir.path())).err().unwrap();
        assert!(e.to_string().contains("different configuration"), "{e}");
    }

    #[test]
    fn protocols_run_on_toy_graph() {
        let g = PlantedPartition::default().generate(3).unwrap();
        let cfg = quick_cfg();
        let prepared = Prepared::new(g, 1, cfg.train.max_len).unwrap();
        let split = split_edges(&prepared.graph, 55.0, 1).unwrap();
        let run = run_transductive(&prepared, &split, &cfg, None).unwrap();
        assert_eq!(run.report.aucs.len(), 2);
        assert_eq!(run.embeddings.shape(), (40, 16));

        let ns = split_nodes_unseen(&prepared.graph, 80.0, 1).unwrap();
        let u = run_unseen(&prepared, &ns, &cfg, None).unwrap();
        assert_eq!(u.state.unseen.len(), 8);
        assert!(u.report.mean.is_finite());

        let c = run_classification(&run.embeddings, &prepared.graph, 50.0, &cfg).unwrap();
        assert_eq!(c.f1s.len(), 2);
    }
}
