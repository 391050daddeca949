//! Differentiable soft assignment between the detections of two frames.
//!
//! Given per-detection embeddings, a score matrix of dot products is pushed
//! through two augmented softmaxes: row-wise with an extra "no match" column
//! (whose mass becomes the deletion score of that detection) and column-wise
//! with an extra "no match" row (whose mass becomes the initiation score).
//! The assignment matrix is the elementwise minimum of the two, giving a
//! doubly substochastic relaxation of a bipartite matching. Exact
//! reverse-mode gradients are provided for training.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

/// Parameters of the augmented softmax.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssignmentConfig {
    /// Score of the synthetic "no match" slot competing with every real pair.
    pub delta_match: f64,
    /// Softmax temperature; larger values sharpen the assignment.
    pub tau: f64,
}

impl Default for AssignmentConfig {
    fn default() -> Self {
        AssignmentConfig {
            delta_match: 0.5,
            tau: 10.0,
        }
    }
}

impl AssignmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!(
                "softmax temperature must be positive and finite, got {}",
                self.tau
            )));
        }
        if !self.delta_match.is_finite() {
            return Err(Error::Config("no-match score must be finite".into()));
        }
        Ok(())
    }
}

/// Output of [`soft_assign`] for an M-detection frame against a K-detection
/// frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult {
    /// M×K soft matching, `min(r, c)`; rows and columns each sum to at most 1.
    pub a: Array2<f64>,
    /// M×K forward scores: row-wise softmax over candidates plus no-match.
    pub r: Array2<f64>,
    /// M×K backward scores: column-wise softmax over candidates plus no-match.
    pub c: Array2<f64>,
    /// Length-M deletion scores, the no-match mass of each row; `r` row sums
    /// plus `del` equal 1.
    pub del: Array1<f64>,
    /// Length-K initiation scores, the no-match mass of each column; `c`
    /// column sums plus `init` equal 1.
    pub init: Array1<f64>,
}

/// Pairwise embedding similarities: S[i][j] = dot(y_i, x_j) for rows of `y`
/// against rows of `x`.
pub fn score_matrix(y: &Array2<f64>, x: &Array2<f64>) -> Result<Array2<f64>> {
    if y.ncols() != x.ncols() {
        return Err(Error::Shape(format!(
            "embedding dims differ: {} vs {}",
            y.ncols(),
            x.ncols()
        )));
    }
    Ok(y.dot(&x.t()))
}

/// Gradients of a scalar loss through [`score_matrix`]: given upstream
/// `g_s = dL/dS`, returns `(dL/dY, dL/dX) = (g_s · X, g_sᵀ · Y)`.
pub fn score_matrix_backward(
    g_s: &Array2<f64>,
    y: &Array2<f64>,
    x: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if g_s.nrows() != y.nrows() || g_s.ncols() != x.nrows() || y.ncols() != x.ncols() {
        return Err(Error::Shape(format!(
            "gradient shape {:?} inconsistent with {:?} x {:?}",
            g_s.dim(),
            y.dim(),
            x.dim()
        )));
    }
    Ok((g_s.dot(x), g_s.t().dot(y)))
}

/// Softmax over `logits` augmented with one extra slot of logit `extra`,
/// stabilized by max subtraction. Returns (probabilities, extra-slot mass).
fn augmented_softmax(logits: &[f64], extra: f64) -> (Vec<f64>, f64) {
    let m = logits.iter().fold(extra, |acc, &v| acc.max(v));
    let e_extra = (extra - m).exp();
    let es: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
    let denom = e_extra + es.iter().sum::<f64>();
    (es.iter().map(|&e| e / denom).collect(), e_extra / denom)
}

/// Soft assignment of M row detections to K column detections given their
/// score matrix. Stable for logits `tau * s` of magnitude up to about 1e4.
pub fn soft_assign(s: &Array2<f64>, cfg: &AssignmentConfig) -> Result<AssignmentResult> {
    cfg.validate()?;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("score matrix has non-finite entries".into()));
    }
    let (m, k) = s.dim();
    let extra = cfg.tau * cfg.delta_match;

    let mut r = Array2::zeros((m, k));
    let mut del = Array1::zeros(m);
    for i in 0..m {
        let logits: Vec<f64> = (0..k).map(|j| cfg.tau * s[[i, j]]).collect();
        let (probs, extra_mass) = augmented_softmax(&logits, extra);
        for (j, p) in probs.into_iter().enumerate() {
            r[[i, j]] = p;
        }
        del[i] = extra_mass;
    }

    let mut c = Array2::zeros((m, k));
    let mut init = Array1::zeros(k);
    for j in 0..k {
        let logits: Vec<f64> = (0..m).map(|i| cfg.tau * s[[i, j]]).collect();
        let (probs, extra_mass) = augmented_softmax(&logits, extra);
        for (i, p) in probs.into_iter().enumerate() {
            c[[i, j]] = p;
        }
        init[j] = extra_mass;
    }

    let a = ndarray::Zip::from(&r).and(&c).map_collect(|&a, &b| a.min(b));
    Ok(AssignmentResult { a, r, c, del, init })
}

/// Backward pass of one augmented softmax: given probabilities `(p, p_extra)`
/// and upstream gradients `(u, u_extra)`, writes dL/dlogit into `out`
/// (the extra slot's logit is a constant, so its gradient is discarded).
fn augmented_softmax_backward(p: &[f64], p_extra: f64, u: &[f64], u_extra: f64, out: &mut [f64]) {
    let inner: f64 =
        p.iter().zip(u).map(|(&pi, &ui)| pi * ui).sum::<f64>() + p_extra * u_extra;
    for ((o, &pi), &ui) in out.iter_mut().zip(p).zip(u) {
        *o = pi * (ui - inner);
    }
}

/// Exact gradient on the score matrix from upstream gradients on the forward
/// scores, backward scores, deletion, and initiation vectors.
pub fn soft_assign_backward_parts(
    s: &Array2<f64>,
    cfg: &AssignmentConfig,
    g_r: &Array2<f64>,
    g_c: &Array2<f64>,
    g_del: &Array1<f64>,
    g_init: &Array1<f64>,
) -> Result<Array2<f64>> {
    let (m, k) = s.dim();
    if g_r.dim() != (m, k) || g_c.dim() != (m, k) || g_del.len() != m || g_init.len() != k {
        return Err(Error::Shape(
            "upstream gradient shapes do not match score matrix".into(),
        ));
    }
    let fwd = soft_assign(s, cfg)?;
    let mut g_s = Array2::zeros((m, k));

    let mut row_p = vec![0.0; k];
    let mut row_u = vec![0.0; k];
    let mut row_g = vec![0.0; k];
    for i in 0..m {
        for j in 0..k {
            row_p[j] = fwd.r[[i, j]];
            row_u[j] = g_r[[i, j]];
        }
        augmented_softmax_backward(&row_p, fwd.del[i], &row_u, g_del[i], &mut row_g);
        for j in 0..k {
            g_s[[i, j]] += cfg.tau * row_g[j];
        }
    }

    let mut col_p = vec![0.0; m];
    let mut col_u = vec![0.0; m];
    let mut col_g = vec![0.0; m];
    for j in 0..k {
        for i in 0..m {
            col_p[i] = fwd.c[[i, j]];
            col_u[i] = g_c[[i, j]];
        }
        augmented_softmax_backward(&col_p, fwd.init[j], &col_u, g_init[j], &mut col_g);
        for i in 0..m {
            g_s[[i, j]] += cfg.tau * col_g[i];
        }
    }
    Ok(g_s)
}

/// Gradient on the score matrix from upstream gradients on the assignment
/// matrix, deletion vector, and initiation vector. The elementwise minimum
/// routes each entry's gradient to whichever of the forward/backward scores
/// attains it; ties go to the forward score.
pub fn soft_assign_backward(
    s: &Array2<f64>,
    cfg: &AssignmentConfig,
    g_a: &Array2<f64>,
    g_del: &Array1<f64>,
    g_init: &Array1<f64>,
) -> Result<Array2<f64>> {
    let (m, k) = s.dim();
    if g_a.dim() != (m, k) {
        return Err(Error::Shape(
            "assignment gradient shape does not match score matrix".into(),
        ));
    }
    let fwd = soft_assign(s, cfg)?;
    let mut g_r = Array2::zeros((m, k));
    let mut g_c = Array2::zeros((m, k));
    for i in 0..m {
        for j in 0..k {
            if fwd.r[[i, j]] <= fwd.c[[i, j]] {
                g_r[[i, j]] = g_a[[i, j]];
            } else {
                g_c[[i, j]] = g_a[[i, j]];
            }
        }
    }
    soft_assign_backward_parts(s, cfg, &g_r, &g_c, g_del, g_init)
}
