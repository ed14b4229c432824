//! Cross-modal fusion: projects the sub-action text features onto the motion
//! timeline (MLP_1), fuses them with the kinematic tokens (cross-attention
//! by default, with element-wise and concatenation alternatives), and
//! classifies the pooled result.

use subact_tensor::{InitSpec, ParamId, ParamStore, Tensor};

use crate::config::{FusionVariant, ModelConfig};
use crate::error::CoreError;
use crate::nn::{leaf, Affine, BatchNorm, ForwardCtx, LayerNorm, Leaves};

/// Channel MLP over sub-action features plus a learned expansion of the
/// sub-action axis to the timeline length: `[B, L_max, D]` to `[B, T', D]`.
pub struct Mlp1 {
    fc1: Affine,
    bn: BatchNorm,
    fc2: Affine,
    pub len_weight: ParamId,
    pub len_bias: ParamId,
    dropout: f64,
    l_max: usize,
    t_prime: usize,
    dim: usize,
}

impl Mlp1 {
    pub fn register(store: &mut ParamStore, cfg: &ModelConfig, seed: u64) -> Result<Mlp1, CoreError> {
        let d = cfg.feature_dim;
        Ok(Mlp1 {
            fc1: Affine::register(store, "mlp1.fc1", d, d, InitSpec::XavierUniform, true, seed)?,
            bn: BatchNorm::register(store, "mlp1.bn", d, seed)?,
            fc2: Affine::register(store, "mlp1.fc2", d, d, InitSpec::XavierUniform, true, seed)?,
            len_weight: store.add(
                "mlp1.len.weight",
                &[cfg.fused_frames(), cfg.l_max],
                InitSpec::XavierUniform,
                seed,
            )?,
            len_bias: store.add("mlp1.len.bias", &[cfg.fused_frames()], InitSpec::Zeros, seed)?,
            dropout: cfg.dropout,
            l_max: cfg.l_max,
            t_prime: cfg.fused_frames(),
            dim: d,
        })
    }

    pub fn buffer_ids(&self) -> [ParamId; 2] {
        self.bn.buffer_ids()
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        leaves: &Leaves,
        t_sub: &Tensor,
        ctx: &mut ForwardCtx,
    ) -> Result<Tensor, CoreError> {
        let b = match t_sub.shape() {
            [b, l, d] if *l == self.l_max && *d == self.dim => *b,
            other => {
                return Err(CoreError::Config(format!(
                    "mlp1 expects [B, {}, {}], got {other:?}",
                    self.l_max, self.dim
                )))
            }
        };
        let rows = t_sub.reshape(&[b * self.l_max, self.dim])?;
        let h = self.fc1.forward(leaves, &rows)?;
        let h = self.bn.forward(store, leaves, &h, ctx)?.relu();
        let h = ctx.dropout(&h, self.dropout)?;
        let h = self.fc2.forward(leaves, &h)?;
        let per_label = h.reshape(&[b, self.l_max, self.dim])?;
        let stretched = leaf(leaves, self.len_weight).lmatmul(&per_label)?;
        Ok(stretched.add(&leaf(leaves, self.len_bias).reshape(&[self.t_prime, 1])?)?)
    }
}

/// Fuses kinematic tokens `X` with timeline-aligned text features, returning
/// the fused tokens and, for attention variants, the attention matrix.
pub struct FusionModule {
    pub w_q: Option<ParamId>,
    pub w_k: Option<ParamId>,
    pub w_v: Option<ParamId>,
    concat: Option<Affine>,
    pub norm: LayerNorm,
    pub variant: FusionVariant,
    d_k: usize,
    dim: usize,
}

impl FusionModule {
    pub fn register(store: &mut ParamStore, cfg: &ModelConfig, seed: u64) -> Result<FusionModule, CoreError> {
        let d = cfg.feature_dim;
        // Near-zero projections make early training approximate the
        // kinematics-only pathway, learning the fusion as a correction.
        let proj = InitSpec::Normal { std: 1e-3 };
        let attention = cfg.fusion.is_attention();
        Ok(FusionModule {
            w_q: attention.then(|| store.add("fusion.w_q", &[d, cfg.d_k], proj, seed)).transpose()?,
            w_k: attention.then(|| store.add("fusion.w_k", &[d, cfg.d_k], proj, seed)).transpose()?,
            w_v: attention.then(|| store.add("fusion.w_v", &[d, d], proj, seed)).transpose()?,
            concat: (cfg.fusion == FusionVariant::Concat)
                .then(|| Affine::register(store, "fusion.concat", 2 * d, d, InitSpec::XavierUniform, true, seed))
                .transpose()?,
            norm: LayerNorm::register(store, "fusion.norm", d, seed)?,
            variant: cfg.fusion,
            d_k: cfg.d_k,
            dim: d,
        })
    }

    /// `x` is `[B, T', D]`; `text` must be `Some` for every variant that
    /// consumes the semantic branch.
    pub fn forward(
        &self,
        leaves: &Leaves,
        x: &Tensor,
        text: Option<&Tensor>,
    ) -> Result<(Tensor, Option<Tensor>), CoreError> {
        let tm = || {
            text.ok_or_else(|| {
                CoreError::Config(format!("fusion variant {} needs text features", self.variant.label()))
            })
        };
        let (pre, attn) = match self.variant {
            FusionVariant::CrossAttention => {
                let (mixed, attn) = self.attend(leaves, x, tm()?)?;
                (x.add(&mixed)?, Some(attn))
            }
            FusionVariant::CrossAttentionNoResidual => {
                let (mixed, attn) = self.attend(leaves, x, tm()?)?;
                (mixed, Some(attn))
            }
            FusionVariant::Add => (x.add(tm()?)?, None),
            FusionVariant::Mul => (x.mul(tm()?)?, None),
            FusionVariant::MulResidual => (x.add(&x.mul(tm()?)?)?, None),
            FusionVariant::Concat => {
                let affine = self.concat.as_ref().expect("concat affine registered with variant");
                let joined = x.concat_last(tm()?)?;
                let (b, t) = (x.shape()[0], x.shape()[1]);
                let rows = joined.reshape(&[b * t, 2 * self.dim])?;
                (affine.forward(leaves, &rows)?.reshape(&[b, t, self.dim])?, None)
            }
            FusionVariant::KinematicsOnly => (x.clone(), None),
        };
        Ok((self.norm.forward(leaves, &pre)?, attn))
    }

    /// Single-head cross-attention: queries from motion, keys and values from
    /// text. Returns `(attn·V, attn)` with attn rows summing to one.
    fn attend(&self, leaves: &Leaves, x: &Tensor, tm: &Tensor) -> Result<(Tensor, Tensor), CoreError> {
        let (b, t) = match x.shape() {
            [b, t, d] if *d == self.dim => (*b, *t),
            other => return Err(CoreError::Config(format!("fusion expects [B, T', {}], got {other:?}", self.dim))),
        };
        let project = |src: &Tensor, w: ParamId, out: usize| -> Result<Tensor, CoreError> {
            Ok(src
                .reshape(&[b * t, self.dim])?
                .matmul(&leaf(leaves, w))?
                .reshape(&[b, t, out])?)
        };
        let q = project(x, self.w_q.expect("attention weights registered"), self.d_k)?;
        let k = project(tm, self.w_k.expect("attention weights registered"), self.d_k)?;
        let v = project(tm, self.w_v.expect("attention weights registered"), self.dim)?;
        let attn = q
            .bmm(&k.transpose_last()?)?
            .scale(1.0 / (self.d_k as f64).sqrt())
            .softmax()?;
        Ok((attn.bmm(&v)?, attn))
    }
}

/// Mean-pools the fused tokens over the timeline and maps to class logits.
pub struct Classifier {
    affine: Affine,
}

impl Classifier {
    pub fn register(store: &mut ParamStore, cfg: &ModelConfig, classes: usize, seed: u64) -> Result<Classifier, CoreError> {
        Ok(Classifier {
            affine: Affine::register(
                store,
                "classifier",
                cfg.feature_dim,
                classes,
                InitSpec::XavierUniform,
                cfg.classifier_bias,
                seed,
            )?,
        })
    }

    /// `[B, T', D]` to `[B, K]` logits.
    pub fn forward(&self, leaves: &Leaves, fused: &Tensor) -> Result<Tensor, CoreError> {
        self.affine.forward(leaves, &fused.mean_axis(1)?)
    }
}
