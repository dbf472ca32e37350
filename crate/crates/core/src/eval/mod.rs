//! Link prediction AUC, fake-edge generation, node classification and
//! report formatting.

mod classify;
mod link;

pub use classify::{classify_nodes, f1_macro, ClassifierConfig, ClassifyReport, LogisticOvr};
pub use link::{
    auc_score, edge_scores, gen_fake_edges, gen_fake_edges_among, link_prediction_eval, link_prediction_eval_among,
    LinkEvalReport, ReportMeta,
};

/// Plain-text table with one column per ratio and one row per method;
/// scores are printed as percentages with one decimal.
pub fn format_table(title: &str, axis: &str, ratios: &[f64], rows: &[(String, Vec<Option<f64>>)]) -> String {
    let width = rows.iter().map(|(m, _)| m.len()).chain([axis.len()]).max().unwrap_or(0);
    let mut s = format!("{title}\n{axis:<width$}");
    for r in ratios {
        s.push_str(&format!(" | {:>5}", format!("{r}%")));
    }
    s.push('\n');
    s.push_str(&"-".repeat(width + ratios.len() * 8));
    s.push('\n');
    for (method, values) in rows {
        s.push_str(&format!("{method:<width$}"));
        for v in values {
            match v {
                Some(v) => s.push_str(&format!(" | {:>5.1}", v * 100.0)),
                None => s.push_str(&format!(" | {:>5}", "-")),
            }
        }
        s.push('\n');
    }
    s
}
