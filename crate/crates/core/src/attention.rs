//! Context-aware text embeddings for a node pair.
//!
//! Mutual attention pools a tanh-squashed word affinity matrix into
//! per-word importance weights for each side of the pair; topological
//! attention scores a node's words against structure embeddings
//! (its own for the self feature, its partner's for the cross feature).
//! The pair embedding is `λ1·z^{c1} + λ2·z^{self} + λ3·z^{cross}`.
//!
//! Internally every text is handled in compact form: only the rows of real
//! (unmasked) tokens are materialized. Masked rows receive zero attention
//! and zero affinity after masking, so the compact computation is exact.

use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, PAD_ID};
use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, masked_softmax, softmax, softmax_backward, Matrix};

/// Weights of the three attention components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
        }
    }
}

impl AttentionConfig {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        let cfg = AttentionConfig {
            lambda1,
            lambda2,
            lambda3,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Expands the nested form `λ_{c1}, λ_{c2}, λ_s, λ_c` into three weights.
    pub fn from_nested(lambda_c1: f64, lambda_c2: f64, lambda_s: f64, lambda_c: f64) -> Result<Self> {
        Self::new(lambda_c1, lambda_c2 * lambda_s, lambda_c2 * lambda_c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn uses_mutual(&self) -> bool {
        self.lambda1 != 0.0
    }

    fn uses_topological(&self) -> bool {
        self.lambda2 != 0.0 || self.lambda3 != 0.0
    }
}

/// Forward cache of mutual attention on compact texts.
#[derive(Clone, Debug)]
pub struct MutualCache {
    /// `tanh(t_i t_jᵀ)` over real rows.
    pub affinity: Matrix,
    pub importance_ij: Vec<f64>,
    pub importance_ji: Vec<f64>,
    pub beta_ij: Vec<f64>,
    pub beta_ji: Vec<f64>,
    pub z_ij: Vec<f64>,
    pub z_ji: Vec<f64>,
}

fn mutual_forward(ti: &Matrix, tj: &Matrix) -> Result<MutualCache> {
    let (ni, nj) = (ti.rows(), tj.rows());
    if ni == 0 || nj == 0 {
        return Err(Error::invalid("mutual attention needs a real token on both sides"));
    }
    let affinity = ti.matmul_transpose(tj)?.map(f64::tanh);
    let importance_ij: Vec<f64> = affinity.row_sums().iter().map(|s| s / nj as f64).collect();
    let importance_ji: Vec<f64> = affinity.col_sums().iter().map(|s| s / ni as f64).collect();
    let beta_ij = softmax(&importance_ij);
    let beta_ji = softmax(&importance_ji);
    let z_ij = ti.transpose_matvec(&beta_ij)?;
    let z_ji = tj.transpose_matvec(&beta_ji)?;
    Ok(MutualCache {
        affinity,
        importance_ij,
        importance_ji,
        beta_ij,
        beta_ji,
        z_ij,
        z_ji,
    })
}

fn mutual_backward(
    c: &MutualCache,
    ti: &Matrix,
    tj: &Matrix,
    g_ij: &[f64],
    g_ji: &[f64],
    dti: &mut Matrix,
    dtj: &mut Matrix,
) {
    let (ni, nj) = (ti.rows(), tj.rows());
    // z = βᵀ t
    let gbeta_ij: Vec<f64> = (0..ni).map(|m| dot(ti.row(m), g_ij)).collect();
    let gbeta_ji: Vec<f64> = (0..nj).map(|n| dot(tj.row(n), g_ji)).collect();
    for m in 0..ni {
        axpy(c.beta_ij[m], g_ij, dti.row_mut(m));
    }
    for n in 0..nj {
        axpy(c.beta_ji[n], g_ji, dtj.row_mut(n));
    }
    let gc_ij = softmax_backward(&c.beta_ij, &gbeta_ij);
    let gc_ji = softmax_backward(&c.beta_ji, &gbeta_ji);
    for m in 0..ni {
        let row_term = gc_ij[m] / nj as f64;
        for n in 0..nj {
            let a = c.affinity.get(m, n);
            let g_pre = (row_term + gc_ji[n] / ni as f64) * (1.0 - a * a);
            if g_pre == 0.0 {
                continue;
            }
            axpy(g_pre, tj.row(n), dti.row_mut(m));
            axpy(g_pre, ti.row(m), dtj.row_mut(n));
        }
    }
}

/// Forward cache of one topological attention read-out.
#[derive(Clone, Debug)]
pub struct TopoCache {
    /// `tanh(t · z^s)` per real row.
    pub scores: Vec<f64>,
    pub gamma: Vec<f64>,
    pub z: Vec<f64>,
}

fn topo_forward(t: &Matrix, query: &[f64]) -> Result<TopoCache> {
    if t.rows() == 0 {
        return Err(Error::invalid("topological attention needs a real token"));
    }
    let scores: Vec<f64> = t.matvec(query)?.into_iter().map(f64::tanh).collect();
    let gamma = softmax(&scores);
    let z = t.transpose_matvec(&gamma)?;
    Ok(TopoCache { scores, gamma, z })
}

/// Adds `scale · ∂z/∂t` contracted with `g` into `dt`; the query is constant.
fn topo_backward(c: &TopoCache, t: &Matrix, query: &[f64], g: &[f64], scale: f64, dt: &mut Matrix) {
    let gz: Vec<f64> = g.iter().map(|x| x * scale).collect();
    let ggamma: Vec<f64> = (0..t.rows()).map(|m| dot(t.row(m), &gz)).collect();
    let ga = softmax_backward(&c.gamma, &ggamma);
    for m in 0..t.rows() {
        let row = dt.row_mut(m);
        axpy(c.gamma[m], &gz, row);
        let gs = ga[m] * (1.0 - c.scores[m] * c.scores[m]);
        axpy(gs, query, row);
    }
}

fn compact(t: &Matrix, mask: &[bool]) -> Result<(Matrix, Vec<usize>)> {
    if t.rows() != mask.len() {
        return Err(Error::shape(t.shape_str(), format!("mask[{}]", mask.len())));
    }
    let idx: Vec<usize> = (0..mask.len()).filter(|&k| mask[k]).collect();
    Ok((t.gather_rows(&idx), idx))
}

fn scatter(values: &[f64], idx: &[usize], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (&k, &v) in idx.iter().zip(values) {
        out[k] = v;
    }
    out
}

/// Result of mutual attention on padded inputs.
#[derive(Clone, Debug)]
pub struct MutualAttention {
    /// Masked affinity `tanh(t_i t_jᵀ ⊙ M)`, `L×L`.
    pub affinity: Matrix,
    pub importance_ij: Vec<f64>,
    pub importance_ji: Vec<f64>,
    pub beta_ij: Vec<f64>,
    pub beta_ji: Vec<f64>,
    pub z_ij: Vec<f64>,
    pub z_ji: Vec<f64>,
}

/// Mutual attention between two padded texts `t_i, t_j ∈ ℝ^{L×d}`.
///
/// Importance scores are mean-pooled over the opposing text's real tokens;
/// weights are a softmax over the own mask.
pub fn mutual_attention(ti: &Matrix, tj: &Matrix, mi: &[bool], mj: &[bool]) -> Result<MutualAttention> {
    if ti.cols() != tj.cols() {
        return Err(Error::shape(ti.shape_str(), tj.shape_str()));
    }
    let (ci, idx_i) = compact(ti, mi)?;
    let (cj, idx_j) = compact(tj, mj)?;
    let c = mutual_forward(&ci, &cj)?;
    let mut affinity = Matrix::zeros(ti.rows(), tj.rows());
    for (a, &m) in idx_i.iter().enumerate() {
        for (b, &n) in idx_j.iter().enumerate() {
            affinity.set(m, n, c.affinity.get(a, b));
        }
    }
    let beta_ij = scatter(&c.beta_ij, &idx_i, ti.rows());
    let beta_ji = scatter(&c.beta_ji, &idx_j, tj.rows());
    debug_assert!(masked_softmax(&scatter(&c.importance_ij, &idx_i, ti.rows()), mi).is_ok());
    Ok(MutualAttention {
        affinity,
        importance_ij: scatter(&c.importance_ij, &idx_i, ti.rows()),
        importance_ji: scatter(&c.importance_ji, &idx_j, tj.rows()),
        beta_ij,
        beta_ji,
        z_ij: c.z_ij,
        z_ji: c.z_ji,
    })
}

/// Self and cross topological read-outs of `t_i`: attention over its real
/// tokens scored by `zs_i` and by the partner's `zs_j` respectively.
pub fn topological_attention(
    ti: &Matrix,
    mi: &[bool],
    zs_i: &[f64],
    zs_j: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (ci, _) = compact(ti, mi)?;
    Ok((topo_forward(&ci, zs_i)?.z, topo_forward(&ci, zs_j)?.z))
}

/// Topological attention weights over the padded positions of `t_i`.
pub fn topological_weights(ti: &Matrix, mi: &[bool], query: &[f64]) -> Result<Vec<f64>> {
    let (ci, idx) = compact(ti, mi)?;
    Ok(scatter(&topo_forward(&ci, query)?.gamma, &idx, ti.rows()))
}

/// `λ1·z^{c1} + λ2·z^{self} + λ3·z^{cross}`.
pub fn combine_context(cfg: &AttentionConfig, z_c1: &[f64], z_self: &[f64], z_cross: &[f64]) -> Vec<f64> {
    z_c1.iter()
        .zip(z_self)
        .zip(z_cross)
        .map(|((a, b), c)| cfg.lambda1 * a + cfg.lambda2 * b + cfg.lambda3 * c)
        .collect()
}

/// Looks up the rows of `words` for the real tokens in `ids`.
pub fn embed_tokens(words: &Matrix, ids: &[TokenId]) -> Matrix {
    let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
    words.gather_rows(&idx)
}

/// All forward artifacts for one ordered node pair `(i, j)`.
#[derive(Clone, Debug)]
pub struct ContextPair {
    pub ids_i: Vec<TokenId>,
    pub ids_j: Vec<TokenId>,
    pub ti: Matrix,
    pub tj: Matrix,
    pub zs_i: Vec<f64>,
    pub zs_j: Vec<f64>,
    pub cfg: AttentionConfig,
    pub mutual: Option<MutualCache>,
    pub self_i: Option<TopoCache>,
    pub cross_ij: Option<TopoCache>,
    pub self_j: Option<TopoCache>,
    pub cross_ji: Option<TopoCache>,
    /// `z^t_{i|j}`
    pub zt_ij: Vec<f64>,
    /// `z^t_{j|i}`
    pub zt_ji: Vec<f64>,
}

/// Sparse gradient on word-embedding rows.
#[derive(Clone, Debug, Default)]
pub struct WordGrad {
    pub ids: Vec<TokenId>,
    pub rows: Vec<Vec<f64>>,
}

impl WordGrad {
    fn push_matrix(&mut self, ids: &[TokenId], g: &Matrix) {
        for (k, &id) in ids.iter().enumerate() {
            if id == PAD_ID {
                continue;
            }
            self.ids.push(id);
            self.rows.push(g.row(k).to_vec());
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for r in &mut self.rows {
            r.iter_mut().for_each(|x| *x *= alpha);
        }
    }

    /// Adds the rows into a dense `|Vocab|×d` gradient.
    pub fn accumulate_into(&self, dense: &mut Matrix) {
        for (&id, r) in self.ids.iter().zip(&self.rows) {
            axpy(1.0, r, dense.row_mut(id as usize));
        }
    }

    pub fn extend(&mut self, other: WordGrad) {
        self.ids.extend(other.ids);
        self.rows.extend(other.rows);
    }
}

impl ContextPair {
    /// Runs every attention component the configuration uses.
    ///
    /// `ids_*` are the real token ids of each text (no padding). Empty texts
    /// are allowed here: a side without tokens contributes zero vectors.
    pub fn forward(
        words: &Matrix,
        ids_i: &[TokenId],
        ids_j: &[TokenId],
        zs_i: &[f64],
        zs_j: &[f64],
        cfg: AttentionConfig,
    ) -> Result<ContextPair> {
        let d = words.cols();
        if zs_i.len() != d || zs_j.len() != d {
            return Err(Error::shape(
                format!("word dim {d}"),
                format!("structure dims {}/{}", zs_i.len(), zs_j.len()),
            ));
        }
        let ti = embed_tokens(words, ids_i);
        let tj = embed_tokens(words, ids_j);
        let both = !ids_i.is_empty() && !ids_j.is_empty();
        let mutual = if cfg.uses_mutual() && both {
            Some(mutual_forward(&ti, &tj)?)
        } else {
            None
        };
        let topo = |t: &Matrix, q: &[f64], w: f64| -> Result<Option<TopoCache>> {
            if w != 0.0 && t.rows() > 0 {
                topo_forward(t, q).map(Some)
            } else {
                Ok(None)
            }
        };
        let (self_i, cross_ij, self_j, cross_ji) = if cfg.uses_topological() {
            (
                topo(&ti, zs_i, cfg.lambda2)?,
                topo(&ti, zs_j, cfg.lambda3)?,
                topo(&tj, zs_j, cfg.lambda2)?,
                topo(&tj, zs_i, cfg.lambda3)?,
            )
        } else {
            (None, None, None, None)
        };
        let zero = vec![0.0; d];
        let pick = |c: &Option<TopoCache>| c.as_ref().map_or(zero.clone(), |c| c.z.clone());
        let (c1_ij, c1_ji) = mutual
            .as_ref()
            .map_or((zero.clone(), zero.clone()), |m| (m.z_ij.clone(), m.z_ji.clone()));
        let zt_ij = combine_context(&cfg, &c1_ij, &pick(&self_i), &pick(&cross_ij));
        let zt_ji = combine_context(&cfg, &c1_ji, &pick(&self_j), &pick(&cross_ji));
        Ok(ContextPair {
            ids_i: ids_i.to_vec(),
            ids_j: ids_j.to_vec(),
            ti,
            tj,
            zs_i: zs_i.to_vec(),
            zs_j: zs_j.to_vec(),
            cfg,
            mutual,
            self_i,
            cross_ij,
            self_j,
            cross_ji,
            zt_ij,
            zt_ji,
        })
    }

    /// Gradients on the word-embedding rows of both texts given upstream
    /// gradients on `z^t_{i|j}` and `z^t_{j|i}`. Structure embeddings act
    /// as constants and receive nothing.
    pub fn backward(&self, g_ij: &[f64], g_ji: &[f64]) -> WordGrad {
        let d = self.ti.cols();
        let mut dti = Matrix::zeros(self.ti.rows(), d);
        let mut dtj = Matrix::zeros(self.tj.rows(), d);
        let cfg = &self.cfg;
        if let Some(m) = &self.mutual {
            let a: Vec<f64> = g_ij.iter().map(|x| cfg.lambda1 * x).collect();
            let b: Vec<f64> = g_ji.iter().map(|x| cfg.lambda1 * x).collect();
            mutual_backward(m, &self.ti, &self.tj, &a, &b, &mut dti, &mut dtj);
        }
        if let Some(c) = &self.self_i {
            topo_backward(c, &self.ti, &self.zs_i, g_ij, cfg.lambda2, &mut dti);
        }
        if let Some(c) = &self.cross_ij {
            topo_backward(c, &self.ti, &self.zs_j, g_ij, cfg.lambda3, &mut dti);
        }
        if let Some(c) = &self.self_j {
            topo_backward(c, &self.tj, &self.zs_j, g_ji, cfg.lambda2, &mut dtj);
        }
        if let Some(c) = &self.cross_ji {
            topo_backward(c, &self.tj, &self.zs_i, g_ji, cfg.lambda3, &mut dtj);
        }
        let mut out = WordGrad::default();
        out.push_matrix(&self.ids_i, &dti);
        out.push_matrix(&self.ids_j, &dtj);
        out
    }

    /// `z^{c1}` pair, zero when mutual attention is disabled.
    pub fn mutual_components(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.ti.cols();
        self.mutual
            .as_ref()
            .map_or((vec![0.0; d], vec![0.0; d]), |m| (m.z_ij.clone(), m.z_ji.clone()))
    }
}
