//! Trains on a planted-partition graph and reports link-prediction AUC on
//! held-out intra-community edges. Arguments are `key=value` config
//! overrides; `p_in`, `p_out` and `topical` adjust the generator.

use std::time::Instant;

use textnet_core::config::RunConfig;
use textnet_core::corpus::split_edges;
use textnet_core::eval::link_prediction_eval;
use textnet_core::pipeline::{meta, run_transductive, Prepared};
use textnet_core::synthetic::{PlantedPartition, TOY_CONFIG};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = RunConfig::from_text(TOY_CONFIG)?;
    let mut pp = PlantedPartition::default();
    for a in std::env::args().skip(1) {
        let (k, v) = a.split_once('=').ok_or("expected key=value")?;
        match k {
            "p_in" => pp.p_in = v.parse()?,
            "p_out" => pp.p_out = v.parse()?,
            "topical" => pp.topical = v.parse()?,
            _ => cfg.set(k, v)?,
        }
    }
    let prepared = Prepared::new(pp.generate(cfg.train.seed)?, 1, cfg.train.max_len)?;
    let split = split_edges(&prepared.graph, 55.0, cfg.train.seed)?;
    let t = Instant::now();
    let run = run_transductive(&prepared, &split, &cfg, None)?;
    let intra: Vec<_> = split
        .test_edges(&prepared.graph)
        .into_iter()
        .filter(|&(u, v)| pp.community_of(u) == pp.community_of(v))
        .collect();
    let report = link_prediction_eval(&run.embeddings, &intra, &prepared.graph, cfg.repetitions, meta(split.ratio, &cfg))?;
    println!(
        "mode {} epochs {} ({:.1}s)\n  all test edges   auc {:.4} ± {:.4}\n  intra-community  auc {:.4} ± {:.4}",
        cfg.train.mode,
        run.outcome.state.epochs_done,
        t.elapsed().as_secs_f64(),
        run.report.mean,
        run.report.std,
        report.mean,
        report.std
    );
    Ok(())
}
