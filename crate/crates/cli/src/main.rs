//! `textnet`: prepare a textual network, train embeddings, evaluate and export.
//!
//! Exit codes: 0 on success, 2 for usage, input or missing-artifact errors,
//! 3 when training hits a numerical failure.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use textnet_core::trainer::Mode;

use commands::{ClassifyArgs, ConfigSources, EvalArgs, ExportArgs, PrepareArgs, TrainArgs};

#[derive(Parser)]
#[command(name = "textnet", version, about = "Context-aware embeddings for textual networks")]
struct Cli {
    /// Worker threads (default: one per logical core). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a graph, build the vocabulary and draw the splits.
    Prepare {
        /// Edge list: `src dst` per line, or a lone id for an isolated node.
        #[arg(long)]
        edges: PathBuf,
        /// Node texts: `node_id<TAB>text` per line.
        #[arg(long)]
        texts: PathBuf,
        /// Node labels: `node_id<TAB>label` per line.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Percentage of edges kept for training.
        #[arg(long, default_value_t = 55.0)]
        ratio: f64,
        /// Also draw a seen/unseen node split keeping this percentage of nodes.
        #[arg(long)]
        unseen_ratio: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Drop tokens seen fewer times than this.
        #[arg(long, default_value_t = 1)]
        min_count: usize,
    },
    /// Train embeddings on a prepared directory; resumes an interrupted run.
    Train {
        #[arg(long)]
        prepared: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Train on the seen nodes of the unseen-node split.
        #[arg(long)]
        unseen: bool,
    },
    /// Link-prediction AUC on the held-out edges of a trained run.
    EvalLink(EvalOpts),
    /// Learn embeddings for the unseen nodes of a run trained with `--unseen`.
    PosttrainUnseen(EvalOpts),
    /// Node-classification macro-F1 at several labeled percentages.
    EvalClassify {
        #[command(flatten)]
        opts: EvalOpts,
        #[arg(long, value_delimiter = ',', default_value = "10,30,50,70")]
        labeled: Vec<f64>,
    },
    /// Write a run's embeddings as text and binary matrices.
    Export {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Export the post-trained embeddings that include unseen nodes.
        #[arg(long)]
        unseen: bool,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config override, repeatable; wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct EvalOpts {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Seed for evaluation sampling; defaults to the training seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl From<EvalOpts> for EvalArgs {
    fn from(o: EvalOpts) -> Self {
        EvalArgs {
            run: o.run,
            repetitions: o.repetitions,
            seed: o.seed,
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Prepare {
            edges,
            texts,
            labels,
            out,
            ratio,
            unseen_ratio,
            seed,
            min_count,
        } => commands::prepare(&PrepareArgs {
            edges,
            texts,
            labels,
            out,
            ratio,
            unseen_ratio,
            seed,
            min_count,
        }),
        Command::Train {
            prepared,
            out,
            config,
            unseen,
        } => {
            let mut flags = Vec::new();
            if let Some(m) = config.mode {
                flags.push(("mode", m.to_string()));
            }
            if let Some(s) = config.seed {
                flags.push(("seed", s.to_string()));
            }
            if let Some(e) = config.epochs {
                flags.push(("epochs", e.to_string()));
            }
            commands::train(&TrainArgs {
                prepared,
                out,
                config: ConfigSources {
                    file: config.config.as_deref(),
                    sets: &config.sets,
                    flags,
                },
                unseen,
            })
        }
        Command::EvalLink(o) => commands::eval_link(&o.into()),
        Command::PosttrainUnseen(o) => commands::posttrain_unseen(&o.into()),
        Command::EvalClassify { opts, labeled } => commands::eval_classify(&ClassifyArgs {
            eval: opts.into(),
            labeled,
        }),
        Command::Export { run, out, unseen } => commands::export(&ExportArgs { run, out, unseen }),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<textnet_core::Error>())
        .any(textnet_core::Error::is_numerical);
    if numerical {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
