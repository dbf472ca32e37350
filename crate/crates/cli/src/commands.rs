use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use textnet_core::config::RunConfig;
use textnet_core::corpus::{
    build_vocab, load_graph, save_graph, split_edges, split_nodes_unseen, EdgeSplit, NodeSplit, TextualGraph,
    Vocabulary,
};
use textnet_core::eval::{format_table, link_prediction_eval, ClassifyReport, LinkEvalReport};
use textnet_core::inductive::save_mapper;
use textnet_core::io::{read_json, read_to_string, write_atomic, write_embeddings_text, write_json};
use textnet_core::numerics::{read_matrix, write_matrix, Matrix};
use textnet_core::pipeline::{learn_unseen, meta, run_classification, train_embeddings, Prepared};
use textnet_core::trainer::{final_embeddings, load_params, save_params};
use textnet_core::Error;

use crate::manifest::{Artifact, PrepareManifest, Protocol, RunManifest};

const EDGES: &str = "graph/edges.txt";
const TEXTS: &str = "graph/texts.txt";
const LABELS: &str = "graph/labels.txt";
const VOCAB: &str = "vocab.txt";
const SPLIT: &str = "split.json";
const NODE_SPLIT: &str = "node_split.json";
const MANIFEST: &str = "manifest.json";

const CONFIG: &str = "config.txt";
const CHECKPOINT: &str = "checkpoint";
const MODEL: &str = "model";
const EMBEDDINGS: &str = "embeddings.bin";
const HISTORY: &str = "history.json";
const UNSEEN: &str = "unseen";

fn missing(path: &Path, what: &str) -> Error {
    Error::MissingArtifact(format!("{} ({what})", path.display()))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(missing(path, what).into());
    }
    Ok(())
}

/// Defaults, then the config file, then `--set` pairs, then dedicated flags.
pub struct ConfigSources<'a> {
    pub file: Option<&'a Path>,
    pub sets: &'a [String],
    pub flags: Vec<(&'static str, String)>,
}

impl ConfigSources<'_> {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(f) = self.file {
            cfg.apply_text(&read_to_string(f)?)
                .with_context(|| format!("reading {}", f.display()))?;
        }
        for kv in self.sets {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects key=value, got `{kv}`"))?;
            cfg.set(k, v)?;
        }
        for (k, v) in &self.flags {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub struct PrepareArgs {
    pub edges: PathBuf,
    pub texts: PathBuf,
    pub labels: Option<PathBuf>,
    pub out: PathBuf,
    pub ratio: f64,
    pub unseen_ratio: Option<f64>,
    pub seed: u64,
    pub min_count: usize,
}

fn input_artifact(path: &Path) -> Result<Artifact> {
    Ok(Artifact {
        path: path.display().to_string(),
        sha256: textnet_core::io::file_sha256(path)?,
    })
}

pub fn prepare(a: &PrepareArgs) -> Result<()> {
    require(&a.edges, "edge list")?;
    require(&a.texts, "node texts")?;
    if let Some(l) = &a.labels {
        require(l, "node labels")?;
    }
    let loaded = load_graph(&a.edges, &a.texts, a.labels.as_deref())?;
    let g = &loaded.graph;
    let vocab = build_vocab(g, a.min_count)?;
    let split = split_edges(g, a.ratio, a.seed)?;
    let node_split = a.unseen_ratio.map(|r| split_nodes_unseen(g, r, a.seed)).transpose()?;

    let out = &a.out;
    fs::create_dir_all(out.join("graph")).map_err(|e| anyhow::anyhow!("creating {}: {e}", out.display()))?;
    let labels = g.labels().map(|_| out.join(LABELS));
    save_graph(g, &out.join(EDGES), &out.join(TEXTS), labels.as_deref())?;
    write_atomic(&out.join(VOCAB), vocab.to_text().as_bytes())?;
    split.save(&out.join(SPLIT))?;
    let mut written = vec![EDGES, TEXTS, VOCAB, SPLIT];
    if labels.is_some() {
        written.insert(2, LABELS);
    } else {
        remove_stale(&out.join(LABELS))?;
    }
    match &node_split {
        Some(ns) => {
            ns.save(&out.join(NODE_SPLIT))?;
            written.push(NODE_SPLIT);
        }
        None => remove_stale(&out.join(NODE_SPLIT))?,
    }

    let mut inputs = vec![input_artifact(&a.edges)?, input_artifact(&a.texts)?];
    if let Some(l) = &a.labels {
        inputs.push(input_artifact(l)?);
    }
    let manifest = PrepareManifest {
        inputs,
        tokenization: textnet_core::corpus::TOKENIZATION.to_string(),
        node_count: g.node_count(),
        edge_count: g.edge_count(),
        self_loops_dropped: loaded.self_loops_dropped,
        duplicates_dropped: loaded.duplicates_dropped,
        min_count: a.min_count,
        vocab_size: vocab.size(),
        seed: a.seed,
        ratio: a.ratio,
        unseen_ratio: a.unseen_ratio,
        has_labels: labels.is_some(),
        artifacts: written.iter().map(|r| Artifact::of(out, r)).collect::<Result<_, _>>()?,
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    println!(
        "prepared {} nodes, {} edges ({} train / {} test), vocabulary {} -> {}",
        g.node_count(),
        g.edge_count(),
        split.train.len(),
        split.test.len(),
        vocab.size(),
        out.display()
    );
    if let Some(ns) = &node_split {
        println!("unseen split: {} seen / {} unseen nodes", ns.seen.len(), ns.unseen.len());
    }
    Ok(())
}

fn remove_stale(path: &Path) -> Result<()> {
    if path.exists() {
        fs::remove_file(path).with_context(|| format!("removing stale {}", path.display()))?;
    }
    Ok(())
}

/// The graph, vocabulary and manifest of a prepared directory.
struct PreparedDir {
    dir: PathBuf,
    manifest: PrepareManifest,
    graph: TextualGraph,
    vocab: Vocabulary,
}

impl PreparedDir {
    fn open(dir: &Path) -> Result<Self> {
        let what = "run `textnet prepare` first";
        for rel in [MANIFEST, EDGES, TEXTS, VOCAB] {
            require(&dir.join(rel), what)?;
        }
        let dir = &fs::canonicalize(dir).with_context(|| format!("resolving {}", dir.display()))?;
        let manifest: PrepareManifest = read_json(&dir.join(MANIFEST))?;
        let labels = manifest.has_labels.then(|| dir.join(LABELS));
        if let Some(l) = &labels {
            require(l, what)?;
        }
        let graph = load_graph(&dir.join(EDGES), &dir.join(TEXTS), labels.as_deref())?.graph;
        let vocab = Vocabulary::from_text(&read_to_string(&dir.join(VOCAB))?)?;
        Ok(PreparedDir {
            dir: dir.to_path_buf(),
            manifest,
            graph,
            vocab,
        })
    }

    fn edge_split(&self) -> Result<EdgeSplit> {
        let p = self.dir.join(SPLIT);
        require(&p, "edge split; run `textnet prepare`")?;
        Ok(EdgeSplit::load(&p)?)
    }

    fn node_split(&self) -> Result<NodeSplit> {
        let p = self.dir.join(NODE_SPLIT);
        require(&p, "unseen-node split; run `textnet prepare --unseen-ratio`")?;
        Ok(NodeSplit::load(&p)?)
    }

    fn prepared(&self, max_len: usize) -> Prepared {
        Prepared::with_vocab(self.graph.clone(), self.vocab.clone(), max_len)
    }

    fn inputs(&self) -> Result<Vec<Artifact>> {
        let mut rels = vec![MANIFEST, EDGES, TEXTS, VOCAB];
        if self.manifest.has_labels {
            rels.push(LABELS);
        }
        rels.iter().map(|r| Ok(Artifact::of(&self.dir, r)?)).collect()
    }
}

pub struct TrainArgs<'a> {
    pub prepared: PathBuf,
    pub out: PathBuf,
    pub config: ConfigSources<'a>,
    pub unseen: bool,
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let pd = PreparedDir::open(&a.prepared)?;
    if cfg.train.min_count != pd.manifest.min_count {
        log::warn!(
            "min_count = {} ignored; the prepared vocabulary was built with {}",
            cfg.train.min_count,
            pd.manifest.min_count
        );
    }
    let (protocol, train_edges, support, ratio, split_rel) = if a.unseen {
        let ns = pd.node_split()?;
        let mut support = vec![false; pd.graph.node_count()];
        for &v in &ns.seen {
            support[v] = true;
        }
        (Protocol::Unseen, ns.train_edges(&pd.graph), Some(support), ns.ratio, NODE_SPLIT)
    } else {
        let s = pd.edge_split()?;
        (Protocol::Transductive, s.train_edges(&pd.graph), None, s.ratio, SPLIT)
    };

    let out = &a.out;
    let ckpt = out.join(CHECKPOINT);
    fs::create_dir_all(&ckpt).with_context(|| format!("creating {}", ckpt.display()))?;
    if ckpt.join("state.json").exists() {
        log::info!("resuming from {}", ckpt.display());
    }
    write_atomic(&out.join(CONFIG), cfg.to_text().as_bytes())?;

    let prepared = pd.prepared(cfg.train.max_len);
    let t = Instant::now();
    let (outcome, z) = train_embeddings(&prepared, train_edges, support, ratio, &cfg, Some(&ckpt))?;
    let elapsed = t.elapsed().as_secs_f64();

    save_params(&out.join(MODEL), &outcome.params)?;
    write_matrix(&out.join(EMBEDDINGS), &z)?;
    write_json(&out.join(HISTORY), &outcome.state.history)?;

    let mut m = RunManifest::new("train", &pd.dir, protocol, cfg.entries());
    m.seeds.insert("train".into(), cfg.train.seed);
    m.seeds.insert("split".into(), pd.manifest.seed);
    m.inputs = pd.inputs()?;
    m.inputs.push(Artifact::of(&pd.dir, split_rel)?);
    m.outputs = [CONFIG, "model/structure.bin", "model/words.bin", EMBEDDINGS, HISTORY]
        .iter()
        .map(|r| Artifact::of(out, r))
        .collect::<Result<_, _>>()?;
    m.timings_s.insert("train".into(), elapsed);
    write_json(&out.join(MANIFEST), &m)?;

    let s = &outcome.state;
    println!(
        "trained {} for {} epochs ({} pretraining){}; best epoch {}; {:.1}s -> {}",
        cfg.train.mode,
        s.epochs_done,
        s.pretrain_epochs_done,
        if s.stopped_early { ", stopped early" } else { "" },
        s.best_epoch.map_or("-".to_string(), |e| e.to_string()),
        elapsed,
        out.display()
    );
    Ok(())
}

/// A trained run directory.
struct RunDir {
    dir: PathBuf,
    manifest: RunManifest,
    cfg: RunConfig,
    prepared: PreparedDir,
}

impl RunDir {
    fn open(dir: &Path) -> Result<Self> {
        let what = "run `textnet train` first";
        require(&dir.join(MANIFEST), what)?;
        require(&dir.join(CONFIG), what)?;
        let manifest: RunManifest = read_json(&dir.join(MANIFEST))?;
        let cfg = RunConfig::from_text(&read_to_string(&dir.join(CONFIG))?)?;
        let prepared = PreparedDir::open(&manifest.prepared_dir)?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            manifest,
            cfg,
            prepared,
        })
    }

    fn embeddings(&self, unseen: bool) -> Result<Matrix> {
        let p = if unseen {
            self.dir.join(UNSEEN).join(EMBEDDINGS)
        } else {
            self.dir.join(EMBEDDINGS)
        };
        let what = if unseen {
            "unseen-node embeddings; run `textnet posttrain-unseen` first"
        } else {
            "trained embeddings; run `textnet train` first"
        };
        require(&p, what)?;
        let z = read_matrix(&p)?;
        if z.rows() != self.prepared.graph.node_count() {
            bail!(
                "{} has {} rows but the graph has {} nodes",
                p.display(),
                z.rows(),
                self.prepared.graph.node_count()
            );
        }
        Ok(z)
    }

    fn record(&self, command: &str, outputs: &[String], seed: u64, seconds: f64) -> Result<()> {
        let mut m = RunManifest::new(command, &self.prepared.dir, self.manifest.protocol, self.cfg.entries());
        m.seeds.insert("eval".into(), seed);
        m.seeds.insert("train".into(), self.cfg.train.seed);
        m.inputs = self.prepared.inputs()?;
        m.inputs.push(Artifact::of(&self.dir, MANIFEST)?);
        m.outputs = outputs
            .iter()
            .map(|r| Artifact::of(&self.dir, r))
            .collect::<Result<_, _>>()?;
        m.timings_s.insert(command.into(), seconds);
        let dir = self.dir.join("manifests");
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        write_json(&dir.join(format!("{command}.json")), &m)?;
        Ok(())
    }
}

fn link_table(title: &str, axis: &str, r: &LinkEvalReport) -> String {
    format_table(title, axis, &[r.meta.ratio], &[(r.meta.mode.clone(), vec![Some(r.mean)])])
}

fn write_link_report(dir: &Path, rel_dir: &str, r: &LinkEvalReport, table: &str) -> Result<Vec<String>> {
    let json = format!("{rel_dir}link_report.json");
    let txt = format!("{rel_dir}link_report.txt");
    write_json(&dir.join(&json), r)?;
    write_atomic(&dir.join(&txt), format!("{}\n{table}", r.to_text()).as_bytes())?;
    Ok(vec![json, txt])
}

pub struct EvalArgs {
    pub run: PathBuf,
    pub repetitions: Option<usize>,
    pub seed: Option<u64>,
}

pub fn eval_link(a: &EvalArgs) -> Result<()> {
    let run = RunDir::open(&a.run)?;
    let graph = &run.prepared.graph;
    let unseen = run.manifest.protocol == Protocol::Unseen;
    let (test, ratio) = if unseen {
        let ns = run.prepared.node_split()?;
        (ns.test_edges(graph), ns.ratio)
    } else {
        let s = run.prepared.edge_split()?;
        (s.test_edges(graph), s.ratio)
    };
    if test.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "the split at {}% training edges has no test edges to evaluate",
            ratio
        ))
        .into());
    }
    let z = run.embeddings(unseen)?;
    let seed = a.seed.unwrap_or(run.cfg.train.seed);
    let reps = a.repetitions.unwrap_or(run.cfg.repetitions);
    let mut m = meta(ratio, &run.cfg);
    m.seed = seed;
    let t = Instant::now();
    let report = link_prediction_eval(&z, &test, graph, reps, m)?;
    let (title, axis, rel) = if unseen {
        ("Link prediction AUC, unseen nodes", "%Seen nodes", "unseen/")
    } else {
        ("Link prediction AUC", "%Train edges", "")
    };
    let table = link_table(title, axis, &report);
    let outputs = write_link_report(&run.dir, rel, &report, &table)?;
    run.record("eval-link", &outputs, seed, t.elapsed().as_secs_f64())?;
    print!("{}\n{table}", report.to_text());
    Ok(())
}

pub fn posttrain_unseen(a: &EvalArgs) -> Result<()> {
    let run = RunDir::open(&a.run)?;
    if run.manifest.protocol != Protocol::Unseen {
        return Err(Error::InvalidArgument(format!(
            "{} was trained on all nodes; retrain with `textnet train --unseen`",
            run.dir.display()
        ))
        .into());
    }
    let model = run.dir.join(MODEL);
    require(&model.join("structure.bin"), "trained model; run `textnet train --unseen` first")?;
    let params = load_params(&model)?;
    let ns = run.prepared.node_split()?;
    let mut cfg = run.cfg.clone();
    if let Some(r) = a.repetitions {
        cfg.repetitions = r;
    }
    let prepared = run.prepared.prepared(cfg.train.max_len);

    let t = Instant::now();
    let (mapper, losses, state, logs) = learn_unseen(&prepared, &ns, &params, &cfg)?;
    let mut combined = params.clone();
    combined.structure = state.combined(&params.structure);
    let z = final_embeddings(&combined, &prepared.texts, &cfg.train, None)?;
    let learn_s = t.elapsed().as_secs_f64();

    let dir = run.dir.join(UNSEEN);
    fs::create_dir_all(dir.join("mapper")).with_context(|| format!("creating {}", dir.display()))?;
    save_mapper(&dir.join("mapper"), &mapper)?;
    write_matrix(&dir.join("unseen_structure.bin"), &state.table)?;
    write_matrix(&dir.join(EMBEDDINGS), &z)?;
    write_json(
        &dir.join("posttrain.json"),
        &serde_json::json!({ "mapper_losses": losses, "posttrain": logs, "unseen": state.unseen }),
    )?;

    let seed = a.seed.unwrap_or(cfg.train.seed);
    let mut m = meta(ns.ratio, &cfg);
    m.seed = seed;
    let test = ns.test_edges(&prepared.graph);
    let report = link_prediction_eval(&z, &test, &prepared.graph, cfg.repetitions, m)?;
    let table = link_table("Link prediction AUC, unseen nodes", "%Seen nodes", &report);
    let mut outputs = write_link_report(&run.dir, "unseen/", &report, &table)?;
    outputs.extend(
        ["unseen/embeddings.bin", "unseen/unseen_structure.bin", "unseen/mapper/mapper.json", "unseen/posttrain.json"]
            .map(String::from),
    );
    run.record("posttrain-unseen", &outputs, seed, learn_s)?;
    print!("{}\n{table}", report.to_text());
    Ok(())
}

pub struct ClassifyArgs {
    pub eval: EvalArgs,
    pub labeled: Vec<f64>,
}

pub fn eval_classify(a: &ClassifyArgs) -> Result<()> {
    let run = RunDir::open(&a.eval.run)?;
    if !run.prepared.manifest.has_labels {
        return Err(missing(&run.prepared.dir.join(LABELS), "node labels; pass --labels to `textnet prepare`").into());
    }
    let z = run.embeddings(false)?;
    let mut cfg = run.cfg.clone();
    if let Some(r) = a.eval.repetitions {
        cfg.repetitions = r;
    }
    if let Some(s) = a.eval.seed {
        cfg.train.seed = s;
    }
    let t = Instant::now();
    let reports: Vec<ClassifyReport> = a
        .labeled
        .iter()
        .map(|&r| run_classification(&z, &run.prepared.graph, r, &cfg))
        .collect::<Result<_, _>>()?;
    let table = format_table(
        "Node classification macro-F1",
        "%Labeled nodes",
        &a.labeled,
        &[(cfg.train.mode.to_string(), reports.iter().map(|r| Some(r.mean)).collect())],
    );
    let text: String = reports.iter().map(ClassifyReport::to_text).collect();
    write_json(&run.dir.join("classify_report.json"), &reports)?;
    write_atomic(&run.dir.join("classify_report.txt"), format!("{text}\n{table}").as_bytes())?;
    run.record(
        "eval-classify",
        &["classify_report.json".into(), "classify_report.txt".into()],
        cfg.train.seed,
        t.elapsed().as_secs_f64(),
    )?;
    print!("{text}\n{table}");
    Ok(())
}

pub struct ExportArgs {
    pub run: PathBuf,
    pub out: PathBuf,
    pub unseen: bool,
}

pub fn export(a: &ExportArgs) -> Result<()> {
    let run = RunDir::open(&a.run)?;
    let z = run.embeddings(a.unseen)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let text = a.out.join("embeddings.txt");
    let bin = a.out.join(EMBEDDINGS);
    write_embeddings_text(&text, run.prepared.graph.node_names(), &z)?;
    write_matrix(&bin, &z)?;
    println!("wrote {} and {} ({}x{})", text.display(), bin.display(), z.rows(), z.cols());
    Ok(())
}
