//! Feature similarity, space similarity and their weighted combination, with
//! analytic gradients with respect to the student embeddings.
//!
//! Feature similarity aligns each student row with the matching teacher row
//! after L2 normalization. Space similarity does the same on the transposed
//! matrices, so each student dimension (a column over the batch) is aligned
//! with the matching teacher dimension. Normalizing columns scales all samples
//! of a dimension identically, which is what keeps the relative geometry of
//! the teacher's embedding space intact.
//!
//! The teacher side never receives gradients.

use crate::error::{Error, Result};
use crate::linalg::{self, EmbeddingMatrix, DEFAULT_EPS};

/// Loss terms of one evaluation of the objective.
///
/// `l_total = beta * (co_weight * l_co + lambda * l_ss)`. `co_weight` is 1 for
/// the combined objective and 0 for the space-only ablation arm.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub l_co: f64,
    pub l_ss: f64,
    pub l_total: f64,
    pub lambda: f64,
    pub beta: f64,
    pub co_weight: f64,
}

impl LossBreakdown {
    /// The total recomputed from the logged parts.
    pub fn recomputed_total(&self) -> f64 {
        self.beta * (self.co_weight * self.l_co + self.lambda * self.l_ss)
    }
}

/// Weights of the two similarity terms plus the overall loss scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CossObjective {
    pub co_weight: f64,
    pub lambda: f64,
    pub beta: f64,
}

impl Default for CossObjective {
    fn default() -> Self {
        Self {
            co_weight: 1.0,
            lambda: 1.0,
            beta: 1.0,
        }
    }
}

impl CossObjective {
    pub fn new(lambda: f64, beta: f64) -> Result<Self> {
        let obj = Self {
            co_weight: 1.0,
            lambda,
            beta,
        };
        obj.validate()?;
        Ok(obj)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid("lambda ≥ 0"));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::invalid("beta > 0"));
        }
        if !(self.co_weight >= 0.0) || !self.co_weight.is_finite() {
            return Err(Error::invalid("co_weight ≥ 0"));
        }
        Ok(())
    }

    /// Loss terms and `∂l_total/∂A_s` in one pass.
    ///
    /// A term whose weight is zero is still reported but contributes nothing
    /// to the gradient.
    pub fn evaluate(
        &self,
        a_s: &EmbeddingMatrix,
        a_t: &EmbeddingMatrix,
    ) -> Result<(LossBreakdown, EmbeddingMatrix)> {
        self.validate()?;
        check_pair(a_s, a_t)?;
        let mut grad = EmbeddingMatrix::zeros(a_s.rows(), a_s.cols());
        let (l_co, grad_co) = row_alignment(a_s, a_t, self.beta * self.co_weight);
        if self.co_weight != 0.0 {
            accumulate(&mut grad, &grad_co);
        }
        let (l_ss, grad_ss_t) =
            row_alignment(&a_s.transpose(), &a_t.transpose(), self.beta * self.lambda);
        if self.lambda != 0.0 {
            accumulate(&mut grad, &grad_ss_t.transpose());
        }
        let breakdown = LossBreakdown {
            l_co,
            l_ss,
            l_total: self.beta * (self.co_weight * l_co + self.lambda * l_ss),
            lambda: self.lambda,
            beta: self.beta,
            co_weight: self.co_weight,
        };
        if !breakdown.l_total.is_finite() || !grad.is_finite() {
            return Err(Error::Numerical("non-finite loss or gradient".into()));
        }
        Ok((breakdown, grad))
    }
}

fn accumulate(into: &mut EmbeddingMatrix, g: &EmbeddingMatrix) {
    for (a, b) in into.as_mut_slice().iter_mut().zip(g.as_slice()) {
        *a += b;
    }
}

fn check_pair(a_s: &EmbeddingMatrix, a_t: &EmbeddingMatrix) -> Result<()> {
    if a_s.shape() != a_t.shape() {
        return Err(Error::shape(format!(
            "student {}x{} vs teacher {}x{}",
            a_s.rows(),
            a_s.cols(),
            a_t.rows(),
            a_t.cols()
        )));
    }
    if !a_s.is_finite() || !a_t.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// `−(1/rows) Σ_i cos(s_i, t_i)` and its gradient in `s`, scaled by `scale`.
///
/// With `n = max(‖s‖, eps)`, `∂cos/∂s = (t̂ − cos·ŝ)/n` when `‖s‖ > eps`, and
/// `t̂/eps` on the guarded branch where `ŝ = s/eps` is linear in `s`.
fn row_alignment(s: &EmbeddingMatrix, t: &EmbeddingMatrix, scale: f64) -> (f64, EmbeddingMatrix) {
    let rows = s.rows();
    let inv_rows = 1.0 / rows as f64;
    let mut grad = EmbeddingMatrix::zeros(rows, s.cols());
    let mut total = 0.0;
    for i in 0..rows {
        let (si, ti) = (s.row(i), t.row(i));
        let s_norm = linalg::norm(si);
        let n_s = s_norm.max(DEFAULT_EPS);
        let n_t = linalg::norm(ti).max(DEFAULT_EPS);
        let c = linalg::dot(si, ti) / (n_s * n_t);
        total += c;
        let w = -scale * inv_rows;
        let gi = grad.row_mut(i);
        if s_norm > DEFAULT_EPS {
            for ((g, sv), tv) in gi.iter_mut().zip(si).zip(ti) {
                *g = w * (tv / n_t - c * sv / n_s) / n_s;
            }
        } else {
            for (g, tv) in gi.iter_mut().zip(ti) {
                *g = w * (tv / n_t) / DEFAULT_EPS;
            }
        }
    }
    (-total * inv_rows, grad)
}

/// Feature similarity loss: negative mean row cosine.
pub fn loss_co(a_s: &EmbeddingMatrix, a_t: &EmbeddingMatrix) -> Result<f64> {
    check_pair(a_s, a_t)?;
    Ok(row_alignment(a_s, a_t, 0.0).0)
}

/// Space similarity loss: negative mean column cosine.
pub fn loss_ss(a_s: &EmbeddingMatrix, a_t: &EmbeddingMatrix) -> Result<f64> {
    check_pair(a_s, a_t)?;
    Ok(row_alignment(&a_s.transpose(), &a_t.transpose(), 0.0).0)
}

pub fn loss_coss(
    a_s: &EmbeddingMatrix,
    a_t: &EmbeddingMatrix,
    lambda: f64,
    beta: f64,
) -> Result<LossBreakdown> {
    Ok(CossObjective::new(lambda, beta)?.evaluate(a_s, a_t)?.0)
}

/// `∂l_total/∂A_s` for the combined objective.
pub fn grad_coss(
    a_s: &EmbeddingMatrix,
    a_t: &EmbeddingMatrix,
    lambda: f64,
    beta: f64,
) -> Result<EmbeddingMatrix> {
    Ok(CossObjective::new(lambda, beta)?.evaluate(a_s, a_t)?.1)
}

/// Default variance guard for the batch-normalization variant.
pub const BN_EPS: f64 = 1e-5;

/// Trainable affine parameters of the batch-normalization distillation variant.
#[derive(Debug, Clone, PartialEq)]
pub struct BnParams {
    pub gamma: Vec<f64>,
    /// Per-dimension shift (unrelated to the loss scale `beta`).
    pub beta_shift: Vec<f64>,
    pub eps: f64,
}

impl BnParams {
    /// `gamma = 1`, `beta_shift = 0`.
    pub fn identity(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta_shift: vec![0.0; dim],
            eps: BN_EPS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BnLoss {
    pub loss: f64,
    pub grad_input: EmbeddingMatrix,
    pub grad_gamma: Vec<f64>,
    pub grad_beta_shift: Vec<f64>,
}

/// Standardizes the student batch per dimension, maps it through the affine
/// `(gamma, beta_shift)` and measures the mean per-sample squared distance to
/// the raw teacher embeddings.
///
/// The standard deviation is the population one, floored at `eps`.
pub fn loss_bn(x_s: &EmbeddingMatrix, x_t: &EmbeddingMatrix, p: &BnParams) -> Result<BnLoss> {
    check_pair(x_s, x_t)?;
    let (b, d) = x_s.shape();
    if b < 2 {
        return Err(Error::invalid("batch too small for BN"));
    }
    if p.gamma.len() != d || p.beta_shift.len() != d {
        return Err(Error::shape(format!(
            "BN parameters of length {}/{} for {d} dimensions",
            p.gamma.len(),
            p.beta_shift.len()
        )));
    }
    if !(p.eps > 0.0) {
        return Err(Error::invalid("BN eps must be positive"));
    }
    let (mean, std) = x_s.col_mean_std();
    let sigma: Vec<f64> = std.iter().map(|s| s.max(p.eps)).collect();
    let clamped: Vec<bool> = std.iter().map(|&s| s <= p.eps).collect();

    let mut x_hat = EmbeddingMatrix::zeros(b, d);
    for i in 0..b {
        for j in 0..d {
            x_hat.set(i, j, (x_s.get(i, j) - mean[j]) / sigma[j]);
        }
    }

    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    // dL/dZ = 2 (Z − X_t) / b
    let mut dz = EmbeddingMatrix::zeros(b, d);
    for i in 0..b {
        let mut row_sq = 0.0;
        for j in 0..d {
            let r = p.gamma[j] * x_hat.get(i, j) + p.beta_shift[j] - x_t.get(i, j);
            row_sq += r * r;
            dz.set(i, j, 2.0 * r * inv_b);
        }
        loss += row_sq;
    }
    loss *= inv_b;

    let mut grad_gamma = vec![0.0; d];
    let mut grad_beta_shift = vec![0.0; d];
    for i in 0..b {
        for j in 0..d {
            grad_gamma[j] += dz.get(i, j) * x_hat.get(i, j);
            grad_beta_shift[j] += dz.get(i, j);
        }
    }

    // Through the standardization: with g = dL/dX̂ = dZ·gamma,
    // dL/dX = (g − mean(g) − X̂·mean(g·X̂)) / sigma, or (g − mean(g)) / eps
    // when sigma sits on its floor and is constant.
    let mut grad_input = EmbeddingMatrix::zeros(b, d);
    for j in 0..d {
        let mut mean_g = 0.0;
        let mut mean_gx = 0.0;
        for i in 0..b {
            let g = dz.get(i, j) * p.gamma[j];
            mean_g += g;
            mean_gx += g * x_hat.get(i, j);
        }
        mean_g *= inv_b;
        mean_gx *= inv_b;
        for i in 0..b {
            let g = dz.get(i, j) * p.gamma[j];
            let v = if clamped[j] {
                (g - mean_g) / sigma[j]
            } else {
                (g - mean_g - x_hat.get(i, j) * mean_gx) / sigma[j]
            };
            grad_input.set(i, j, v);
        }
    }

    if !loss.is_finite() || !grad_input.is_finite() {
        return Err(Error::Numerical("non-finite BN loss".into()));
    }
    Ok(BnLoss {
        loss,
        grad_input,
        grad_gamma,
        grad_beta_shift,
    })
}
