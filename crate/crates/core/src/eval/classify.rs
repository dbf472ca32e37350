use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::link::{mean_std, ReportMeta};
use crate::error::{Error, Result};
use crate::numerics::{dot, sigmoid, AdamState, Matrix, RngStream, Substream};

const MAX_SPLIT_TRIES: usize = 20;

/// Settings of the one-vs-rest logistic classifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    /// Standardize features with training-set statistics.
    pub standardize: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 200,
            lr: 0.01,
            l2: 1e-4,
            standardize: true,
        }
    }
}

/// Unweighted mean over `class_count` classes of `2TP / (2TP + FP + FN)`;
/// a class with no true and no predicted members scores 0.
pub fn f1_macro(pred: &[usize], truth: &[usize], class_count: usize) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!("{} predictions", pred.len()), format!("{} labels", truth.len())));
    }
    if class_count == 0 {
        return Err(Error::invalid("class_count must be positive"));
    }
    let mut tp = vec![0usize; class_count];
    let mut fp = vec![0usize; class_count];
    let mut fn_ = vec![0usize; class_count];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= class_count || t >= class_count {
            return Err(Error::invalid(format!("label {} out of range for {class_count} classes", p.max(t))));
        }
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let total: f64 = (0..class_count)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / class_count as f64)
}

/// Fitted one-vs-rest logistic regression.
#[derive(Clone, Debug)]
pub struct LogisticOvr {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// One row per class: weights followed by the bias.
    weights: Matrix,
}

impl LogisticOvr {
    pub fn fit(x: &Matrix, y: &[usize], class_count: usize, cfg: &ClassifierConfig) -> Result<Self> {
        let (n, d) = x.shape();
        if n != y.len() || n == 0 {
            return Err(Error::shape(x.shape_str(), format!("{} labels", y.len())));
        }
        let (mean, scale) = if cfg.standardize {
            let mean: Vec<f64> = (0..d).map(|c| (0..n).map(|r| x.get(r, c)).sum::<f64>() / n as f64).collect();
            let scale = (0..d)
                .map(|c| {
                    let v = (0..n).map(|r| (x.get(r, c) - mean[c]).powi(2)).sum::<f64>() / n as f64;
                    if v > 1e-24 {
                        1.0 / v.sqrt()
                    } else {
                        1.0
                    }
                })
                .collect();
            (mean, scale)
        } else {
            (vec![0.0; d], vec![1.0; d])
        };
        let xs = standardize(x, &mean, &scale);
        let rows: Vec<Result<Vec<f64>>> = (0..class_count)
            .into_par_iter()
            .map(|c| {
                let mut w = vec![0.0; d + 1];
                let mut adam = AdamState::new(d + 1);
                for _ in 0..cfg.epochs {
                    let mut g = vec![0.0; d + 1];
                    for r in 0..n {
                        let row = xs.row(r);
                        let target = if y[r] == c { 1.0 } else { 0.0 };
                        let err = sigmoid(dot(&w[..d], row) + w[d]) - target;
                        for (gk, xk) in g[..d].iter_mut().zip(row) {
                            *gk += err * xk;
                        }
                        g[d] += err;
                    }
                    g.iter_mut().for_each(|v| *v /= n as f64);
                    for k in 0..d {
                        g[k] += cfg.l2 * w[k];
                    }
                    adam.step(&mut w, &g, cfg.lr)?;
                }
                Ok(w)
            })
            .collect();
        let mut weights = Matrix::zeros(class_count, d + 1);
        for (c, r) in rows.into_iter().enumerate() {
            weights.row_mut(c).copy_from_slice(&r?);
        }
        Ok(LogisticOvr { mean, scale, weights })
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        let xs = standardize(x, &self.mean, &self.scale);
        let d = xs.cols();
        (0..xs.rows())
            .map(|r| {
                let mut best = (0, f64::NEG_INFINITY);
                for c in 0..self.weights.rows() {
                    let w = self.weights.row(c);
                    let s = dot(&w[..d], xs.row(r)) + w[d];
                    if s > best.1 {
                        best = (c, s);
                    }
                }
                best.0
            })
            .collect()
    }
}

fn standardize(x: &Matrix, mean: &[f64], scale: &[f64]) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        for (v, (m, s)) in out.row_mut(r).iter_mut().zip(mean.iter().zip(scale)) {
            *v = (*v - m) * s;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub f1s: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// `ratio` is the labeled percentage.
    pub meta: ReportMeta,
}

impl ClassifyReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, f) in self.f1s.iter().enumerate() {
            s.push_str(&format!(
                "classify rep={k} mode={} labeled={} seed={} macro_f1={f:.6}\n",
                self.meta.mode, self.meta.ratio, self.meta.seed
            ));
        }
        s.push_str(&format!(
            "# summary\nmode: {}\nlabeled_ratio: {}\nrepetitions: {}\nf1_mean: {:.6}\nf1_std: {:.6}\n",
            self.meta.mode,
            self.meta.ratio,
            self.f1s.len(),
            self.mean,
            self.std
        ));
        s
    }
}

/// Trains on a random `meta.ratio`% of the labeled nodes and reports
/// macro-F1 on the remainder, `repetitions` times.
pub fn classify_nodes(
    z: &Matrix,
    labels: &[Option<usize>],
    class_count: usize,
    repetitions: usize,
    meta: ReportMeta,
    cfg: &ClassifierConfig,
) -> Result<ClassifyReport> {
    let (labeled_ratio, seed) = (meta.ratio, meta.seed);
    if labels.len() != z.rows() {
        return Err(Error::shape(z.shape_str(), format!("{} labels", labels.len())));
    }
    if !(labeled_ratio > 0.0 && labeled_ratio < 100.0) {
        return Err(Error::invalid(format!("labeled ratio {labeled_ratio} outside (0, 100)")));
    }
    let nodes: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_some()).collect();
    let n_train = ((labeled_ratio / 100.0) * nodes.len() as f64).round() as usize;
    if n_train == 0 || n_train >= nodes.len() {
        return Err(Error::invalid(format!(
            "labeled ratio {labeled_ratio} of {} labeled nodes leaves an empty side",
            nodes.len()
        )));
    }
    let mut f1s = Vec::with_capacity(repetitions);
    for rep in 0..repetitions {
        let mut rng = RngStream::derive(seed, Substream::Classify, rep as u64);
        let mut split = None;
        for _ in 0..MAX_SPLIT_TRIES {
            let mut order = nodes.clone();
            rng.shuffle(&mut order);
            let mut seen = vec![false; class_count];
            for &i in &order[..n_train] {
                seen[labels[i].unwrap()] = true;
            }
            let present: Vec<bool> = {
                let mut p = vec![false; class_count];
                for &i in &nodes {
                    p[labels[i].unwrap()] = true;
                }
                p
            };
            if seen.iter().zip(&present).all(|(s, p)| *s || !*p) {
                split = Some(order);
                break;
            }
        }
        let order = split.ok_or_else(|| {
            Error::invalid(format!("no training split covering every class after {MAX_SPLIT_TRIES} tries"))
        })?;
        let (tr, te) = order.split_at(n_train);
        let y_tr: Vec<usize> = tr.iter().map(|&i| labels[i].unwrap()).collect();
        let y_te: Vec<usize> = te.iter().map(|&i| labels[i].unwrap()).collect();
        let model = LogisticOvr::fit(&z.gather_rows(tr), &y_tr, class_count, cfg)?;
        f1s.push(f1_macro(&model.predict(&z.gather_rows(te)), &y_te, class_count)?);
    }
    let (mean, std) = mean_std(&f1s);
    Ok(ClassifyReport {
        f1s,
        mean,
        std,
        meta,
    })
}
