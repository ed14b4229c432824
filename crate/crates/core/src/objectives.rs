//! Training objectives: recognition cross-entropy over the classifier
//! logits, a semantic loss aligning aggregated sub-action features with the
//! holistic label feature, and their weighted combination.

use subact_tensor::{InitSpec, ParamStore, Tensor};

use crate::config::{LossWeights, ModelConfig};
use crate::error::CoreError;
use crate::nn::{Affine, ForwardCtx, Leaves};

/// Aggregates the per-sample sub-action features into one vector comparable
/// with the holistic text feature: flatten, affine, dropout, affine. No
/// normalization or activation inside, keeping text embedding ranges intact.
pub struct Mlp2 {
    fc1: Affine,
    fc2: Affine,
    dropout: f64,
    l_max: usize,
    dim: usize,
}

impl Mlp2 {
    pub fn register(store: &mut ParamStore, cfg: &ModelConfig, seed: u64) -> Result<Mlp2, CoreError> {
        let d = cfg.feature_dim;
        Ok(Mlp2 {
            fc1: Affine::register(store, "mlp2.fc1", cfg.l_max * d, d, InitSpec::XavierUniform, true, seed)?,
            fc2: Affine::register(store, "mlp2.fc2", d, d, InitSpec::XavierUniform, true, seed)?,
            dropout: cfg.dropout,
            l_max: cfg.l_max,
            dim: d,
        })
    }

    /// `[B, L_max, D]` to `[B, D]`.
    pub fn forward(&self, leaves: &Leaves, t_sub: &Tensor, ctx: &mut ForwardCtx) -> Result<Tensor, CoreError> {
        let b = match t_sub.shape() {
            [b, l, d] if *l == self.l_max && *d == self.dim => *b,
            other => {
                return Err(CoreError::Config(format!(
                    "mlp2 expects [B, {}, {}], got {other:?}",
                    self.l_max, self.dim
                )))
            }
        };
        let flat = t_sub.reshape(&[b, self.l_max * self.dim])?;
        let h = self.fc1.forward(leaves, &flat)?;
        let h = ctx.dropout(&h, self.dropout)?;
        self.fc2.forward(leaves, &h)
    }
}

/// Mean cross-entropy between logits `[B, K]` and the target class ids.
pub fn recognition_loss(logits: &Tensor, targets: &[usize]) -> Result<Tensor, CoreError> {
    let (b, k) = match logits.shape() {
        [b, k] => (*b, *k),
        other => return Err(CoreError::Config(format!("logits must be [B, K], got {other:?}"))),
    };
    if targets.len() != b {
        return Err(CoreError::Config(format!("{} targets for {b} logit rows", targets.len())));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
        return Err(CoreError::Data(format!("target class {bad} outside 0..{k}")));
    }
    let lse = logits.logsumexp()?;
    let picked = logits.pick_per_row(targets)?;
    Ok(lse.sub(&picked)?.mean_all())
}

const COSINE_EPS: f64 = 1e-12;

/// One minus the mean cosine similarity between aggregated sub-action
/// features and holistic text features, both `[B, D]`. Zero-norm rows are
/// treated as orthogonal (contributing exactly 1) and counted in the return
/// value; range is [0, 2].
pub fn semantic_loss(pred: &Tensor, t_hol: &Tensor) -> Result<(Tensor, usize), CoreError> {
    if pred.shape() != t_hol.shape() || pred.shape().len() != 2 {
        return Err(CoreError::Config(format!(
            "semantic loss expects matching [B, D] inputs, got {:?} and {:?}",
            pred.shape(),
            t_hol.shape()
        )));
    }
    let b = pred.shape()[0];
    let dot = pred.mul(t_hol)?.sum_axis(1)?;
    let norm_p = pred.mul(pred)?.sum_axis(1)?.sqrt()?;
    let norm_h = t_hol.mul(t_hol)?.sum_axis(1)?.sqrt()?;
    let denom = norm_p.mul(&norm_h)?.add_const(COSINE_EPS);
    let cos = dot.div(&denom)?;

    // Degenerate (zero-norm) rows would yield cos = 0/eps; mask them so the
    // loss lands exactly at the orthogonal value 1.
    let mask: Vec<f64> = (0..b)
        .map(|i| if norm_p.data()[i] * norm_h.data()[i] == 0.0 { 0.0 } else { 1.0 })
        .collect();
    let degenerate = mask.iter().filter(|&&m| m == 0.0).count();
    if degenerate > 0 {
        log::warn!("semantic loss: {degenerate} zero-norm feature rows treated as orthogonal");
    }
    let cos = if degenerate > 0 {
        cos.mul(&Tensor::constant(mask, &[b])?)?
    } else {
        cos
    };
    Ok((cos.mean_all().scale(-1.0).add_const(1.0), degenerate))
}

/// `λ1·recognition + λ2·semantic`. Pass `None` when the semantic branch is
/// disabled (λ2 = 0) so its graph is never built.
pub fn total_loss(recog: &Tensor, sem: Option<&Tensor>, w: &LossWeights) -> Result<Tensor, CoreError> {
    w.validate()?;
    let total = recog.scale(w.lambda1);
    Ok(match sem {
        Some(s) if w.lambda2 != 0.0 => total.add(&s.scale(w.lambda2))?,
        _ => total,
    })
}
